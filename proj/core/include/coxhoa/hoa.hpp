#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "coxhoa/fit.hpp"
#include "coxhoa/partial_lik.hpp"
#include "coxhoa/survdata.hpp"

namespace coxhoa {

// Simulated likelihood covariances at theta_1 = theta_hat, theta_2 =
// theta_psi under the reference censoring model:
//   s1    = cov{U(theta_1), U(theta_2)}             (row index from U(theta_1))
//   s2    = cov{U(theta_1), l(theta_2) - l(theta_1)}
//   i_hat = var{U(theta_1)}
// The *_se members are elementwise Monte Carlo standard errors.
struct CovarianceEstimates {
  Matrix s1;
  Vector s2;
  Matrix i_hat;
  Index trials = 0;
  Matrix s1_se;
  Vector s2_se;
  Matrix i_hat_se;
};

struct CovarianceOptions {
  Index trials = 2000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

// Trials are generated at theta_hat with the analysis censoring plan; no
// model is fitted. Throws NumericalError if i_hat is not positive definite.
CovarianceEstimates estimate_covariances(const RankData& rank, const RelativeRiskModel& model,
                                         const Vector& theta_hat, const Vector& theta_psi,
                                         const CovarianceOptions& options);

enum class HoaMethod { skovgaard, fixed_riskset };

std::string to_string(HoaMethod method);

struct HoaResult {
  HoaMethod method = HoaMethod::skovgaard;
  double r = 0.0;
  double u = 0.0;  // u-circle for skovgaard, Wald statistic w for fixed risk sets
  double c = 1.0;  // C_psi for skovgaard, rho^{1/2} for fixed risk sets
  double np = 0.0;
  double inf = 0.0;
  double r_star = 0.0;
  double p_lower = 0.5;
  double p_upper = 0.5;
};

// |r| below this is treated as r = 0, where both adjustments vanish.
inline constexpr double kContinuityThreshold = 1e-4;

// r* = r + NP + INF with the sample-space derivatives replaced by the
// simulated covariances. Works in the (psi, nu) coordinates of `spec`.
// Throws NumericalError when C_psi <= 0 or u/r <= 0.
HoaResult skovgaard_rstar(const FitResult& fit_hat, const FitResult& fit_psi,
                          const CovarianceEstimates& cov, const HypothesisSpec& spec);

// r* for the frame of reference with all risk sets held fixed:
// INF = log(w / r) / r with w the Wald statistic, NP = log(rho^{1/2}) / r with
// rho = |j_nunu(theta_hat)| / |j_nunu(theta_psi)|.
HoaResult fixed_riskset_rstar(const FitResult& fit_hat, const FitResult& fit_psi,
                              const HypothesisSpec& spec);

struct NpInfSummary {
  Index count = 0;
  double slope = 0.0;  // least-squares slope of NP on INF
  double intercept = 0.0;
  double mean_np = 0.0;
  double mean_inf = 0.0;
  double mean_abs_np = 0.0;
  double mean_abs_inf = 0.0;
};

NpInfSummary np_inf_diagnostics(std::span<const HoaResult> results);

}  // namespace coxhoa
