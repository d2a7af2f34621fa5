#include "coxhoa/hoa.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "coxhoa/error.hpp"
#include "coxhoa/parallel.hpp"
#include "coxhoa/refcensor.hpp"
#include "coxhoa/rng.hpp"

namespace coxhoa {

std::string to_string(HoaMethod method) {
  return method == HoaMethod::skovgaard ? "skovgaard" : "fixed-riskset";
}

CovarianceEstimates estimate_covariances(const RankData& rank, const RelativeRiskModel& model,
                                         const Vector& theta_hat, const Vector& theta_psi,
                                         const CovarianceOptions& options) {
  const Index p = rank.dimension();
  const Index trials = options.trials;
  if (trials < 100) throw ValidationError("covariance simulation needs at least 100 trials");
  if (theta_hat.size() != p || theta_psi.size() != p) {
    throw ValidationError("parameter dimension does not match covariates");
  }
  if (!theta_hat.allFinite() || !theta_psi.allFinite()) {
    throw NumericalError("covariance simulation needs finite parameter points");
  }

  // Per trial: U(theta_hat), U(theta_psi), l(theta_psi) - l(theta_hat).
  const Index width = 2 * p + 1;
  Matrix draws(width, trials);
  const ReferenceTrialGenerator generator(rank, model, theta_hat);
  parallel_for(static_cast<std::size_t>(trials), options.threads, [&](std::size_t b) {
    RngStream rng(options.seed, b);
    const RankData trial = generator.generate(rng);
    const auto at_hat = evaluate_likelihood(trial, model, theta_hat, LikelihoodOrder::score);
    const auto at_psi = evaluate_likelihood(trial, model, theta_psi, LikelihoodOrder::score);
    auto col = draws.col(static_cast<Index>(b));
    col.head(p) = at_hat.score;
    col.segment(p, p) = at_psi.score;
    col(2 * p) = at_psi.loglik - at_hat.loglik;
  });

  const Vector mean = draws.rowwise().mean();
  const Matrix centered = draws.colwise() - mean;
  const double rn = static_cast<double>(trials);
  // Entry by entry with one summation order, so coincident rows give
  // bitwise-identical covariances. The SE of each estimate is the sd of the
  // centered products over sqrt(R).
  Matrix cov(width, width);
  Matrix se(width, width);
  for (Index a = 0; a < width; ++a) {
    for (Index b = a; b < width; ++b) {
      const Eigen::ArrayXd prod = centered.row(a).array() * centered.row(b).array();
      const double m = prod.sum() / rn;
      cov(a, b) = cov(b, a) = prod.sum() / (rn - 1.0);
      const double var = (prod - m).square().sum() / (rn - 1.0);
      se(a, b) = se(b, a) = std::sqrt(var / rn);
    }
  }

  CovarianceEstimates est;
  est.trials = trials;
  est.i_hat = cov.topLeftCorner(p, p);
  est.s1 = cov.block(0, p, p, p);
  est.s2 = cov.block(0, 2 * p, p, 1);
  est.i_hat_se = se.topLeftCorner(p, p);
  est.s1_se = se.block(0, p, p, p);
  est.s2_se = se.block(0, 2 * p, p, 1);

  if (!est.i_hat.allFinite() || !est.s1.allFinite() || !est.s2.allFinite()) {
    throw NumericalError("simulated covariances are not finite");
  }
  Eigen::LDLT<Matrix> ldlt(est.i_hat);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
    throw NumericalError("simulated expected information is not positive definite after " +
                         std::to_string(trials) + " trials");
  }
  return est;
}

namespace {

HoaResult from_adjustments(HoaMethod method, double r, double u, double c) {
  HoaResult out;
  out.method = method;
  out.r = r;
  out.u = u;
  out.c = c;
  if (std::abs(r) < kContinuityThreshold) {
    out.r_star = 0.0;
    return out;
  }
  if (!(c > 0.0) || !std::isfinite(c)) {
    std::ostringstream msg;
    msg << to_string(method) << ": nuisance adjustment undefined (C = " << c << ", r = " << r
        << ")";
    throw NumericalError(msg.str());
  }
  if (!(u / r > 0.0) || !std::isfinite(u / r)) {
    std::ostringstream msg;
    msg << to_string(method) << ": information adjustment undefined (u = " << u
        << ", r = " << r << ")";
    throw NumericalError(msg.str());
  }
  out.np = std::log(c) / r;
  out.inf = std::log(u / r) / r;
  out.r_star = r + out.np + out.inf;
  out.p_lower = normal_cdf(out.r_star);
  out.p_upper = normal_cdf(-out.r_star);
  return out;
}

double determinant(const Matrix& m) { return m.size() == 0 ? 1.0 : m.determinant(); }

void require_positive_definite(const Matrix& m, const char* what) {
  if (m.size() == 0) return;
  Eigen::LDLT<Matrix> ldlt(m);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
    throw NumericalError(std::string(what) + " is not positive definite");
  }
}

}  // namespace

HoaResult skovgaard_rstar(const FitResult& fit_hat, const FitResult& fit_psi,
                          const CovarianceEstimates& cov, const HypothesisSpec& spec) {
  const double r = signed_root(fit_hat, fit_psi, spec);
  if (std::abs(r) < kContinuityThreshold) return from_adjustments(HoaMethod::skovgaard, r, r, 1.0);

  const Index p = spec.dimension();
  const Index k = p - 1;
  // theta = T phi with phi = (psi, nu); derivative objects pick up T^T.
  const Matrix& t = spec.inverse_transform();
  const Matrix j_hat = t.transpose() * fit_hat.observed_info * t;
  const Matrix j_psi = t.transpose() * fit_psi.observed_info * t;
  const Matrix i_hat = t.transpose() * cov.i_hat * t;
  const Matrix s1 = t.transpose() * cov.s1 * t;
  const Vector s2 = t.transpose() * cov.s2;
  require_positive_definite(j_hat, "observed information at theta_hat");

  Eigen::LDLT<Matrix> i_ldlt(i_hat);
  if (i_ldlt.info() != Eigen::Success || !(i_ldlt.vectorD().array() > 0.0).all()) {
    throw NumericalError("simulated expected information is not positive definite");
  }
  // Mixed sample-space derivative d^2 l(theta_psi) / d phi_hat d phi (rows:
  // phi_hat) and the score difference l_{;phi_hat}(theta_hat) -
  // l_{;phi_hat}(theta_psi).
  const Matrix mixed = j_hat * i_ldlt.solve(s1);
  const Vector q = -(j_hat * i_ldlt.solve(s2));

  double profile = q(0);
  double c = 1.0;
  double j_adjusted = j_hat(0, 0);
  if (k > 0) {
    const Matrix mixed_nn = mixed.bottomRightCorner(k, k);
    Eigen::FullPivLU<Matrix> lu(mixed_nn);
    if (!lu.isInvertible()) throw NumericalError("mixed nuisance derivative block is singular");
    profile -= (mixed.block(0, 1, 1, k) * lu.solve(q.tail(k)))(0);
    const Matrix jh_nn = j_hat.bottomRightCorner(k, k);
    const Matrix jp_nn = j_psi.bottomRightCorner(k, k);
    require_positive_definite(jp_nn, "nuisance information at theta_psi");
    c = determinant(mixed_nn) / std::sqrt(determinant(jp_nn) * determinant(jh_nn));
    j_adjusted = j_hat(0, 0) -
                 (j_hat.block(0, 1, 1, k) * jh_nn.ldlt().solve(j_hat.block(1, 0, k, 1)))(0);
  }
  if (!(j_adjusted > 0.0)) throw NumericalError("adjusted information is not positive");
  const double u = profile / std::sqrt(j_adjusted);
  return from_adjustments(HoaMethod::skovgaard, r, u, c);
}

HoaResult fixed_riskset_rstar(const FitResult& fit_hat, const FitResult& fit_psi,
                              const HypothesisSpec& spec) {
  const double r = signed_root(fit_hat, fit_psi, spec);
  if (std::abs(r) < kContinuityThreshold) {
    return from_adjustments(HoaMethod::fixed_riskset, r, r, 1.0);
  }
  const Index k = spec.dimension() - 1;
  const Matrix& t = spec.inverse_transform();
  const Matrix j_hat = t.transpose() * fit_hat.observed_info * t;
  const Matrix j_psi = t.transpose() * fit_psi.observed_info * t;
  const double w =
      (spec.psi(fit_hat.theta) - spec.psi0()) *
      std::sqrt(adjusted_information(fit_hat.observed_info, spec));
  double rho = 1.0;
  if (k > 0) {
    const Matrix jh_nn = j_hat.bottomRightCorner(k, k);
    const Matrix jp_nn = j_psi.bottomRightCorner(k, k);
    require_positive_definite(jp_nn, "nuisance information at theta_psi");
    rho = determinant(jh_nn) / determinant(jp_nn);
  }
  return from_adjustments(HoaMethod::fixed_riskset, r, w, std::sqrt(rho));
}

NpInfSummary np_inf_diagnostics(std::span<const HoaResult> results) {
  if (results.size() < 2) throw ValidationError("NP/INF diagnostics need at least two results");
  NpInfSummary s;
  s.count = static_cast<Index>(results.size());
  const double n = static_cast<double>(results.size());
  for (const auto& r : results) {
    s.mean_np += r.np / n;
    s.mean_inf += r.inf / n;
    s.mean_abs_np += std::abs(r.np) / n;
    s.mean_abs_inf += std::abs(r.inf) / n;
  }
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& r : results) {
    sxx += (r.inf - s.mean_inf) * (r.inf - s.mean_inf);
    sxy += (r.inf - s.mean_inf) * (r.np - s.mean_np);
  }
  if (!(sxx > 0.0)) throw NumericalError("INF has zero variance; regression slope undefined");
  s.slope = sxy / sxx;
  s.intercept = s.mean_np - s.slope * s.mean_inf;
  return s;
}

}  // namespace coxhoa
