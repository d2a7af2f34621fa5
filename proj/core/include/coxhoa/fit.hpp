#pragma once

#include <string>

#include "coxhoa/partial_lik.hpp"
#include "coxhoa/survdata.hpp"
#include "coxhoa/types.hpp"

namespace coxhoa {

// Scalar interest parameter psi(theta) = a . theta with hypothesized value
// psi0. The nuisance coordinates nu = B theta use a completion basis B whose
// rows are an orthonormal basis of the complement of a, obtained by
// Gram-Schmidt on the standard basis vectors in order. For a coordinate
// functional e_k this makes nu the remaining coordinates in order.
class HypothesisSpec {
 public:
  static HypothesisSpec coordinate(Index dimension, Index index, double psi0);
  static HypothesisSpec linear(Vector functional, double psi0);

  const Vector& functional() const { return functional_; }
  double psi0() const { return psi0_; }
  const Matrix& completion() const { return completion_; }  // (p-1) x p
  Index dimension() const { return functional_.size(); }

  // Same functional and completion, different hypothesized value.
  HypothesisSpec with_psi0(double psi0) const;

  double psi(const Vector& theta) const { return functional_.dot(theta); }
  // theta on the hypothesis for nuisance value nu.
  Vector theta_at(const Vector& nu) const;
  // Rows a then B: maps theta to (psi, nu).
  Matrix transform() const;
  // theta = inverse_transform() * (psi, nu).
  const Matrix& inverse_transform() const { return inverse_; }

 private:
  HypothesisSpec(Vector functional, double psi0);
  Vector functional_;
  double psi0_ = 0.0;
  Matrix completion_;
  Vector right_inverse_;  // b with a . b = 1
  Matrix inverse_;
};

struct FitOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 50;
  int max_halvings = 30;
  double divergence_bound = 50.0;
  double plateau_tolerance = 1e-10;
};

enum class FitStatus { converged, divergent, failed };

std::string to_string(FitStatus status);

struct FitResult {
  Vector theta;
  double loglik = 0.0;
  double score_norm = 0.0;  // sup norm of the score along free directions
  Matrix observed_info;     // full p x p at theta
  FitStatus status = FitStatus::failed;
  int iterations = 0;

  bool usable() const { return status != FitStatus::failed; }
};

// Newton-Raphson from theta = 0 with step halving. Stops when the score is
// below the gradient tolerance and the Newton step is negligible. A fit whose
// parameter runs past the divergence bound while the log likelihood has
// plateaued is flagged divergent (monotone likelihood) and keeps the plateau
// log likelihood.
FitResult fit_unconstrained(const RankData& rank, const RelativeRiskModel& model,
                            const FitOptions& options = {});

// Maximizes over nu with psi fixed at spec.psi0(); theta = psi0 b + B^T nu.
// With p = 1 this is a single evaluation at theta = psi0 / a.
FitResult fit_constrained(const RankData& rank, const RelativeRiskModel& model,
                          const HypothesisSpec& spec, const FitOptions& options = {});

// r = sgn(psi_hat - psi0) sqrt(2 (l(theta_hat) - l(theta_psi))). A negative
// bracket within 1e-10 of zero is treated as zero; beyond that the fits are
// inconsistent and NumericalError is thrown.
double signed_root(const FitResult& fit_hat, const FitResult& fit_psi,
                   const HypothesisSpec& spec);

// Adjusted observed information for psi, 1 / (a j^{-1} a^T).
double adjusted_information(const Matrix& information, const HypothesisSpec& spec);
// Wald standard error of psi_hat.
double wald_se(const FitResult& fit_hat, const HypothesisSpec& spec);

double normal_cdf(double x);

struct TailProbabilities {
  double lower = 0.5;
  double upper = 0.5;
  double two_sided = 1.0;
};

// Phi(r), 1 - Phi(r) and twice the smaller.
TailProbabilities first_order_pvalues(double r);

}  // namespace coxhoa
