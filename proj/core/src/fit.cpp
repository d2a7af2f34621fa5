#include "coxhoa/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coxhoa/error.hpp"

namespace coxhoa {

HypothesisSpec::HypothesisSpec(Vector functional, double psi0)
    : functional_(std::move(functional)), psi0_(psi0) {
  const Index p = functional_.size();
  if (p == 0) throw ValidationError("hypothesis functional is empty");
  if (!functional_.allFinite() || !std::isfinite(psi0_)) {
    throw ValidationError("hypothesis has non-finite entries");
  }
  const double norm = functional_.norm();
  if (norm == 0.0) throw ValidationError("hypothesis functional must be nonzero");

  // Deterministic orthonormal complement of a.
  std::vector<Vector> basis;
  basis.push_back(functional_ / norm);
  completion_.resize(p - 1, p);
  Index filled = 0;
  for (Index k = 0; k < p && filled < p - 1; ++k) {
    Vector v = Vector::Unit(p, k);
    for (const auto& q : basis) v -= q.dot(v) * q;
    for (const auto& q : basis) v -= q.dot(v) * q;
    const double vn = v.norm();
    if (vn < 1e-8) continue;
    v /= vn;
    // Exact unit vectors stay exact when a is a coordinate functional.
    for (Index i = 0; i < p; ++i) {
      if (std::abs(v[i]) < 1e-15) v[i] = 0.0;
    }
    basis.push_back(v);
    completion_.row(filled++) = v.transpose();
  }
  if (filled != p - 1) throw NumericalError("could not complete the hypothesis basis");

  right_inverse_ = functional_ / functional_.squaredNorm();
  const Matrix a = transform();
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw NumericalError("hypothesis basis is not invertible");
  inverse_ = lu.inverse();
}

HypothesisSpec HypothesisSpec::coordinate(Index dimension, Index index, double psi0) {
  if (index < 0 || index >= dimension) {
    throw ValidationError("coordinate index " + std::to_string(index) + " outside 0.." +
                          std::to_string(dimension - 1));
  }
  return HypothesisSpec(Vector::Unit(dimension, index), psi0);
}

HypothesisSpec HypothesisSpec::linear(Vector functional, double psi0) {
  return HypothesisSpec(std::move(functional), psi0);
}

HypothesisSpec HypothesisSpec::with_psi0(double psi0) const {
  if (!std::isfinite(psi0)) throw ValidationError("psi0 must be finite");
  HypothesisSpec copy = *this;
  copy.psi0_ = psi0;
  return copy;
}

Vector HypothesisSpec::theta_at(const Vector& nu) const {
  Vector theta = psi0_ * right_inverse_;
  if (nu.size() > 0) theta.noalias() += completion_.transpose() * nu;
  return theta;
}

Matrix HypothesisSpec::transform() const {
  Matrix a(dimension(), dimension());
  a.row(0) = functional_.transpose();
  if (dimension() > 1) a.bottomRows(dimension() - 1) = completion_;
  return a;
}

std::string to_string(FitStatus status) {
  switch (status) {
    case FitStatus::converged: return "converged";
    case FitStatus::divergent: return "divergent";
    case FitStatus::failed: return "failed";
  }
  return "unknown";
}

namespace {

// Newton ascent of l(origin + L^T x) over x.
FitResult newton(const RankData& rank, const RelativeRiskModel& model, const Vector& origin,
                 const Matrix& directions, const FitOptions& opt) {
  const Index k = directions.rows();
  FitResult result;
  Vector x = Vector::Zero(k);
  Vector theta = origin;
  LikelihoodTerms terms = evaluate_likelihood(rank, model, theta);

  auto finish = [&](FitStatus status, int iterations) {
    result.theta = theta;
    result.loglik = terms.loglik;
    result.score_norm = k > 0 ? (directions * terms.score).lpNorm<Eigen::Infinity>() : 0.0;
    result.observed_info = std::move(terms.information);
    if (status == FitStatus::converged &&
        theta.lpNorm<Eigen::Infinity>() > opt.divergence_bound) {
      status = FitStatus::divergent;
    }
    result.status = status;
    result.iterations = iterations;
    return result;
  };

  if (k == 0) return finish(FitStatus::converged, 0);

  const double loglik_slack = 1e-12;
  double last_increase = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Vector gradient = directions * terms.score;
    const Matrix hessian = directions * terms.information * directions.transpose();
    const double gnorm = gradient.lpNorm<Eigen::Infinity>();

    Vector step;
    Eigen::LDLT<Matrix> ldlt(hessian);
    const bool pd = ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all();
    if (pd) {
      step = ldlt.solve(gradient);
    }
    if (!pd || !step.allFinite()) {
      // Ridge regularization of a numerically singular information.
      const double scale = std::max(hessian.diagonal().cwiseAbs().maxCoeff(), 1e-300);
      bool solved = false;
      for (double ridge = 1e-10; ridge <= 1e2 && !solved; ridge *= 100.0) {
        Matrix h = hessian;
        h.diagonal().array() += ridge * scale + 1e-300;
        Eigen::LDLT<Matrix> reg(h);
        if (reg.info() == Eigen::Success && (reg.vectorD().array() > 0.0).all()) {
          step = reg.solve(gradient);
          solved = step.allFinite();
        }
      }
      if (!solved) {
        if (gnorm < opt.gradient_tolerance) return finish(FitStatus::converged, it);
        throw NumericalError("singular information matrix during Newton iterations");
      }
    }

    const double step_norm = step.lpNorm<Eigen::Infinity>();
    if (gnorm < opt.gradient_tolerance && step_norm < 1e-4) {
      return finish(FitStatus::converged, it);
    }

    const double current = terms.loglik;
    double t = 1.0;
    double accepted = -std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      const Vector candidate = origin + directions.transpose() * (x + t * step);
      double value;
      try {
        value = log_partial_likelihood(rank, model, candidate);
      } catch (const NumericalError&) {
        continue;
      }
      if (value >= current - loglik_slack * (1.0 + std::abs(current))) {
        accepted = value;
        ok = true;
        break;
      }
    }
    if (!ok) {
      if (gnorm < opt.gradient_tolerance) return finish(FitStatus::converged, it);
      return finish(FitStatus::failed, it);
    }

    // Flat ascent with a long Newton step is the monotone-likelihood
    // signature; extend the step while the likelihood keeps rising.
    if (t == 1.0 && step_norm > 0.5 && accepted - current < 1e-6) {
      double limit = 2.0 * opt.divergence_bound;
      for (int e = 0; e < 8; ++e) {
        const Vector trial_x = x + 2.0 * t * step;
        const Vector candidate = origin + directions.transpose() * trial_x;
        if (candidate.lpNorm<Eigen::Infinity>() > limit) break;
        double value;
        try {
          value = log_partial_likelihood(rank, model, candidate);
        } catch (const NumericalError&) {
          break;
        }
        if (!(value >= accepted)) break;
        accepted = value;
        t *= 2.0;
      }
    }

    x += t * step;
    theta = origin + directions.transpose() * x;
    terms = evaluate_likelihood(rank, model, theta);
    last_increase = terms.loglik - current;

    if (theta.lpNorm<Eigen::Infinity>() > opt.divergence_bound &&
        last_increase < opt.plateau_tolerance) {
      return finish(FitStatus::divergent, it + 1);
    }
  }

  const double gnorm = (directions * terms.score).lpNorm<Eigen::Infinity>();
  if (gnorm < opt.gradient_tolerance) return finish(FitStatus::converged, opt.max_iterations);
  if (last_increase < opt.plateau_tolerance && gnorm < 1e-6) {
    return finish(FitStatus::divergent, opt.max_iterations);
  }
  return finish(FitStatus::failed, opt.max_iterations);
}

void check_fit_inputs(const RankData& rank) {
  if (rank.dimension() < 1) throw ValidationError("model has no covariates");
  for (const auto& s : rank.strata()) {
    if (s.failures() == 0) {
      throw ValidationError("stratum " + std::to_string(s.label) + " has no failures");
    }
  }
}

}  // namespace

FitResult fit_unconstrained(const RankData& rank, const RelativeRiskModel& model,
                            const FitOptions& options) {
  check_fit_inputs(rank);
  const Index p = rank.dimension();
  return newton(rank, model, Vector::Zero(p), Matrix::Identity(p, p), options);
}

FitResult fit_constrained(const RankData& rank, const RelativeRiskModel& model,
                          const HypothesisSpec& spec, const FitOptions& options) {
  check_fit_inputs(rank);
  if (spec.dimension() != rank.dimension()) {
    throw ValidationError("hypothesis dimension does not match covariates");
  }
  const Vector origin = spec.theta_at(Vector::Zero(spec.dimension() - 1));
  return newton(rank, model, origin, spec.completion(), options);
}

double signed_root(const FitResult& fit_hat, const FitResult& fit_psi,
                   const HypothesisSpec& spec) {
  double bracket = fit_hat.loglik - fit_psi.loglik;
  if (!std::isfinite(bracket)) throw NumericalError("non-finite log likelihood difference");
  if (bracket < 0.0) {
    if (bracket < -1e-10) {
      throw NumericalError("inconsistent fits: constrained log likelihood exceeds unconstrained by " +
                           std::to_string(-bracket));
    }
    bracket = 0.0;
  }
  const double diff = spec.psi(fit_hat.theta) - spec.psi0();
  const double root = std::sqrt(2.0 * bracket);
  return diff > 0.0 ? root : (diff < 0.0 ? -root : 0.0);
}

double adjusted_information(const Matrix& information, const HypothesisSpec& spec) {
  Eigen::LDLT<Matrix> ldlt(information);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
    throw NumericalError("observed information is not positive definite");
  }
  const double v = spec.functional().dot(ldlt.solve(spec.functional()));
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw NumericalError("adjusted information is not positive");
  }
  return 1.0 / v;
}

double wald_se(const FitResult& fit_hat, const HypothesisSpec& spec) {
  return 1.0 / std::sqrt(adjusted_information(fit_hat.observed_info, spec));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

TailProbabilities first_order_pvalues(double r) {
  if (!std::isfinite(r)) throw ValidationError("signed root must be finite");
  TailProbabilities p;
  p.lower = normal_cdf(r);
  p.upper = normal_cdf(-r);
  p.two_sided = std::min(1.0, 2.0 * std::min(p.lower, p.upper));
  return p;
}

}  // namespace coxhoa
