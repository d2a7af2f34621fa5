#pragma once

#include <cstdint>
#include <vector>

#include "coxhoa/fit.hpp"
#include "coxhoa/partial_lik.hpp"
#include "coxhoa/survdata.hpp"

namespace coxhoa {

struct BootstrapOptions {
  Index trials = 10000;
  std::uint64_t seed = 1;
  unsigned threads = 1;  // 0: hardware concurrency
  FitOptions fit;
  // Abort when fewer than this fraction of trials yield a usable r.
  double min_completed_fraction = 0.5;
};

struct BootstrapResult {
  Index requested = 0;
  Index completed = 0;
  Index failed = 0;
  Index divergent = 0;  // completed trials with a divergence-flagged fit
  double r_obs = 0.0;
  Index count_le = 0;  // #{r_b <= r_obs}
  Index count_ge = 0;  // #{r_b >= r_obs}
  double p_lower = 1.0;
  double p_upper = 1.0;
  double p_two_sided = 1.0;
  std::uint64_t seed = 0;
};

// Parametric bootstrap of the signed root under the reference censoring
// model: trial b simulates ranks at theta_psi with the analysis censoring
// plan using RngStream(seed, b), refits both models and records r_b. Tail
// probabilities use add-one smoothing, (1 + count) / (completed + 1); ties
// count toward both tails. Trials whose fits fail are discarded and counted.
BootstrapResult bootstrap_pvalue(const RankData& rank, const RelativeRiskModel& model,
                                 const HypothesisSpec& spec, const BootstrapOptions& options);

// Same, reusing an unconstrained fit of the analysis data.
BootstrapResult bootstrap_pvalue(const RankData& rank, const RelativeRiskModel& model,
                                 const HypothesisSpec& spec, const FitResult& fit_hat,
                                 const BootstrapOptions& options);

enum class BoundSide { lower, upper };

struct BisectionStep {
  double psi0 = 0.0;
  double p = 0.0;  // p_upper for the lower bound, p_lower for the upper bound
};

struct ConfidenceBound {
  double value = 0.0;
  double p_check = 0.0;  // tail probability recomputed at `value`
  Index completed = 0;   // completed trials in that recomputation
  bool grid_fallback = false;
  bool at_estimate = false;  // p <= alpha already at psi_hat; value = psi_hat
  std::vector<BisectionStep> trace;
};

struct ConfidenceInterval {
  double psi_hat = 0.0;
  double se = 0.0;
  double alpha = 0.05;
  ConfidenceBound lower;
  ConfidenceBound upper;
};

// Solves p_upper(psi0) = alpha (lower bound) or p_lower(psi0) = alpha (upper
// bound) by bisection over [psi_hat - 5 SE, psi_hat] or [psi_hat, psi_hat +
// 5 SE]. Every evaluation reuses options.seed, so trials share random numbers
// across psi0. Stops when the bracket is narrower than 1e-3 SE or after 40
// steps. If the evaluated p values are not monotone in psi0, a 101-point grid
// scan over the bracket replaces bisection and the outermost crossing is
// returned. When p <= alpha already at psi_hat the bound is psi_hat itself.
// Throws NumericalError when p stays above alpha at psi_hat -+ 5 SE.
ConfidenceBound invert_bound(const RankData& rank, const RelativeRiskModel& model,
                             const HypothesisSpec& direction, const FitResult& fit_hat,
                             BoundSide side, double alpha, const BootstrapOptions& options);

// Both one-sided (1 - alpha) bounds for psi = a . theta; `direction` supplies
// a and the completion basis, its psi0 is ignored.
ConfidenceInterval invert_ci(const RankData& rank, const RelativeRiskModel& model,
                             const HypothesisSpec& direction, double alpha,
                             const BootstrapOptions& options);

}  // namespace coxhoa
