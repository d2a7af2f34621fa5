#include "coxhoa/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coxhoa/error.hpp"
#include "coxhoa/parallel.hpp"
#include "coxhoa/refcensor.hpp"
#include "coxhoa/rng.hpp"

namespace coxhoa {

namespace {

struct TrialOutcome {
  double r = 0.0;
  bool ok = false;
  bool divergent = false;
};

}  // namespace

BootstrapResult bootstrap_pvalue(const RankData& rank, const RelativeRiskModel& model,
                                 const HypothesisSpec& spec, const BootstrapOptions& options) {
  const FitResult fit_hat = fit_unconstrained(rank, model, options.fit);
  return bootstrap_pvalue(rank, model, spec, fit_hat, options);
}

BootstrapResult bootstrap_pvalue(const RankData& rank, const RelativeRiskModel& model,
                                 const HypothesisSpec& spec, const FitResult& fit_hat,
                                 const BootstrapOptions& options) {
  if (options.trials < 1) throw ValidationError("bootstrap needs at least one trial");
  if (!fit_hat.usable()) throw NumericalError("unconstrained fit of the analysis data failed");
  const FitResult fit_psi = fit_constrained(rank, model, spec, options.fit);
  if (!fit_psi.usable()) throw NumericalError("constrained fit of the analysis data failed");

  BootstrapResult result;
  result.requested = options.trials;
  result.seed = options.seed;
  result.r_obs = signed_root(fit_hat, fit_psi, spec);

  const ReferenceTrialGenerator generator(rank, model, fit_psi.theta);
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(options.trials));
  parallel_for(outcomes.size(), options.threads, [&](std::size_t b) {
    RngStream rng(options.seed, b);
    TrialOutcome& out = outcomes[b];
    try {
      const RankData trial = generator.generate(rng);
      const FitResult hat = fit_unconstrained(trial, model, options.fit);
      if (!hat.usable()) return;
      const FitResult psi = fit_constrained(trial, model, spec, options.fit);
      if (!psi.usable()) return;
      out.r = signed_root(hat, psi, spec);
      out.divergent =
          hat.status == FitStatus::divergent || psi.status == FitStatus::divergent;
      out.ok = true;
    } catch (const NumericalError&) {
      out.ok = false;
    }
  });

  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++result.failed;
      continue;
    }
    ++result.completed;
    if (o.divergent) ++result.divergent;
    if (o.r <= result.r_obs) ++result.count_le;
    if (o.r >= result.r_obs) ++result.count_ge;
  }
  if (static_cast<double>(result.completed) <
      options.min_completed_fraction * static_cast<double>(result.requested)) {
    throw NumericalError("bootstrap aborted: only " + std::to_string(result.completed) + " of " +
                         std::to_string(result.requested) + " trials yielded a usable statistic");
  }
  const double denom = static_cast<double>(result.completed) + 1.0;
  result.p_lower = (1.0 + static_cast<double>(result.count_le)) / denom;
  result.p_upper = (1.0 + static_cast<double>(result.count_ge)) / denom;
  result.p_two_sided = std::min(1.0, 2.0 * std::min(result.p_lower, result.p_upper));
  return result;
}

ConfidenceBound invert_bound(const RankData& rank, const RelativeRiskModel& model,
                             const HypothesisSpec& direction, const FitResult& fit_hat,
                             BoundSide side, double alpha, const BootstrapOptions& options) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (fit_hat.status != FitStatus::converged) {
    throw NumericalError("confidence bounds need a converged unconstrained fit");
  }
  const double psi_hat = direction.psi(fit_hat.theta);
  const double se = wald_se(fit_hat, direction);
  const double sign = side == BoundSide::lower ? -1.0 : 1.0;

  ConfidenceBound bound;
  struct Eval {
    double p;
    Index completed;
  };
  auto evaluate = [&](double psi0) {
    const auto res =
        bootstrap_pvalue(rank, model, direction.with_psi0(psi0), fit_hat, options);
    const Eval e{side == BoundSide::lower ? res.p_upper : res.p_lower, res.completed};
    bound.trace.push_back({psi0, e.p});
    return e;
  };

  // Distances from psi_hat; p should fall as the distance grows.
  double near = 0.0;
  double far = 5.0;
  const Eval at_near = evaluate(psi_hat);
  if (!(at_near.p > alpha)) {
    // Already rejected at the estimate: nothing on this side survives.
    bound.value = psi_hat;
    bound.at_estimate = true;
    bound.p_check = at_near.p;
    bound.completed = at_near.completed;
    return bound;
  }
  const Eval at_far = evaluate(psi_hat + sign * far * se);
  if (at_far.p > alpha) {
    std::ostringstream msg;
    msg << "no crossing of alpha = " << alpha << " in the initial bracket: p = " << at_near.p
        << " at psi_hat, p = " << at_far.p << " at psi_hat " << (sign < 0 ? "-" : "+")
        << " 5 SE";
    throw NumericalError(msg.str());
  }

  auto monotone = [&] {
    std::vector<BisectionStep> pts = bound.trace;
    std::sort(pts.begin(), pts.end(), [&](const auto& a, const auto& b) {
      return sign * (a.psi0 - psi_hat) < sign * (b.psi0 - psi_hat);
    });
    const double slack =
        2.0 * std::sqrt(alpha * (1.0 - alpha) / std::max<double>(1.0, at_near.completed));
    double lowest = pts.front().p;
    for (const auto& pt : pts) {
      if (pt.p > lowest + slack) return false;
      lowest = std::min(lowest, pt.p);
    }
    return true;
  };

  bool fallback = false;
  for (int step = 0; step < 40 && far - near >= 1e-3; ++step) {
    const double mid = 0.5 * (near + far);
    const Eval e = evaluate(psi_hat + sign * mid * se);
    if (e.p > alpha) {
      near = mid;
    } else {
      far = mid;
    }
    if (!monotone()) {
      fallback = true;
      break;
    }
  }

  if (fallback) {
    bound.grid_fallback = true;
    constexpr int points = 101;
    std::vector<double> grid_p(points);
    for (int k = 0; k < points; ++k) {
      grid_p[k] = evaluate(psi_hat + sign * (5.0 * k / (points - 1)) * se).p;
    }
    int outer = 0;
    for (int k = 0; k + 1 < points; ++k) {
      if (grid_p[k] > alpha && !(grid_p[k + 1] > alpha)) outer = k;
    }
    near = 5.0 * outer / (points - 1);
    far = 5.0 * (outer + 1) / (points - 1);
  }

  bound.value = psi_hat + sign * 0.5 * (near + far) * se;
  const Eval check = evaluate(bound.value);
  bound.trace.pop_back();
  bound.p_check = check.p;
  bound.completed = check.completed;
  return bound;
}

ConfidenceInterval invert_ci(const RankData& rank, const RelativeRiskModel& model,
                             const HypothesisSpec& direction, double alpha,
                             const BootstrapOptions& options) {
  const FitResult fit_hat = fit_unconstrained(rank, model, options.fit);
  ConfidenceInterval ci;
  ci.alpha = alpha;
  ci.lower = invert_bound(rank, model, direction, fit_hat, BoundSide::lower, alpha, options);
  ci.upper = invert_bound(rank, model, direction, fit_hat, BoundSide::upper, alpha, options);
  ci.psi_hat = direction.psi(fit_hat.theta);
  ci.se = wald_se(fit_hat, direction);
  return ci;
}

}  // namespace coxhoa
