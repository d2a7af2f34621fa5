#include "coxhoa/partial_lik.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "coxhoa/error.hpp"

namespace coxhoa {

namespace {

[[noreturn]] void throw_non_finite(const Vector& theta) {
  std::ostringstream msg;
  msg << "relative risk is not finite at theta = (" << theta.transpose().format(
      Eigen::IOFormat(Eigen::FullPrecision, Eigen::DontAlignCols, ", ", ", ")) << ")";
  throw NumericalError(msg.str());
}

// Per-subject log RR and, for non-loglinear models, its derivatives.
struct SubjectTerms {
  std::vector<double> log_rr;
  Matrix gradient;              // p x n; unused for loglinear (covariates serve)
  std::vector<Matrix> hessian;  // unused for loglinear
};

SubjectTerms subject_terms(const RankData& rank, const RelativeRiskModel& model,
                           const Vector& theta, LikelihoodOrder order) {
  const Index n = rank.subjects();
  const Index p = rank.dimension();
  SubjectTerms terms;
  terms.log_rr.resize(n);
  if (model.is_loglinear()) {
    Eigen::Map<Vector> eta(terms.log_rr.data(), n);
    eta.noalias() = rank.covariates().transpose() * theta;
    if (!eta.allFinite()) throw_non_finite(theta);
    return terms;
  }
  const bool derivs = order != LikelihoodOrder::value;
  if (derivs) {
    terms.gradient.resize(p, n);
    terms.hessian.assign(n, Matrix::Zero(p, p));
  }
  for (Index i = 0; i < n; ++i) {
    const Vector z = rank.covariate(i);
    terms.log_rr[i] = model.log_risk(z, theta);
    if (!std::isfinite(terms.log_rr[i])) throw_non_finite(theta);
    if (derivs) {
      model.log_risk_derivatives(z, theta, terms.gradient.col(i), terms.hessian[i]);
    }
  }
  return terms;
}

}  // namespace

double RelativeRiskModel::relative_risk(const Eigen::Ref<const Vector>& z,
                                        const Vector& theta) const {
  return std::exp(log_risk(z, theta));
}

double LogLinearRisk::log_risk(const Eigen::Ref<const Vector>& z, const Vector& theta) const {
  return z.dot(theta);
}

void LogLinearRisk::log_risk_derivatives(const Eigen::Ref<const Vector>& z, const Vector&,
                                         Eigen::Ref<Vector> gradient,
                                         Eigen::Ref<Matrix> hessian) const {
  gradient = z;
  hessian.setZero();
}

const RelativeRiskModel& loglinear_model() {
  static const LogLinearRisk model;
  return model;
}

LikelihoodTerms evaluate_likelihood(const RankData& rank, const RelativeRiskModel& model,
                                    const Vector& theta, LikelihoodOrder order) {
  const Index p = rank.dimension();
  if (theta.size() != p) {
    throw ValidationError("parameter has dimension " + std::to_string(theta.size()) +
                          ", expected " + std::to_string(p));
  }
  if (!theta.allFinite()) throw_non_finite(theta);

  const SubjectTerms subj = subject_terms(rank, model, theta, order);
  const bool loglinear = model.is_loglinear();
  const bool want_score = order != LikelihoodOrder::value;
  const bool want_info = order == LikelihoodOrder::information;
  const double* grad_base = loglinear ? rank.covariates().data() : subj.gradient.data();

  LikelihoodTerms out;
  if (want_score) out.score = Vector::Zero(p);
  if (want_info) out.information = Matrix::Zero(p, p);

  std::vector<double> s1(want_score ? p : 0);
  std::vector<double> s2(want_info ? p * p : 0);  // lower triangle used
  double* score = want_score ? out.score.data() : nullptr;
  double* info = want_info ? out.information.data() : nullptr;

  for (const auto& stratum : rank.strata()) {
    double running_max = -std::numeric_limits<double>::infinity();
    double s0 = 0.0;
    std::fill(s1.begin(), s1.end(), 0.0);
    std::fill(s2.begin(), s2.end(), 0.0);
    Index j = stratum.failures() - 1;

    for (Index k = stratum.size() - 1; k >= 0; --k) {
      const Index subject = stratum.sequence[k];
      const double eta = subj.log_rr[subject];
      if (eta > running_max) {
        if (s0 > 0.0) {
          const double scale = std::exp(running_max - eta);
          s0 *= scale;
          for (auto& v : s1) v *= scale;
          for (auto& v : s2) v *= scale;
        }
        running_max = eta;
      }
      const double w = std::exp(eta - running_max);
      s0 += w;
      if (want_score) {
        const double* g = grad_base + subject * p;
        for (Index a = 0; a < p; ++a) s1[a] += w * g[a];
        if (want_info) {
          for (Index b = 0; b < p; ++b) {
            const double wg = w * g[b];
            for (Index a = b; a < p; ++a) s2[a + b * p] += wg * g[a];
          }
          if (!loglinear) {
            const Matrix& h = subj.hessian[subject];
            for (Index b = 0; b < p; ++b) {
              for (Index a = b; a < p; ++a) s2[a + b * p] += w * h(a, b);
            }
          }
        }
      }

      while (j >= 0 && stratum.riskset_start[j] == k) {
        const Index failed = stratum.sequence[stratum.failure_pos[j]];
        out.loglik += subj.log_rr[failed] - running_max - std::log(s0);
        if (want_score) {
          const double* g = grad_base + failed * p;
          const double inv = 1.0 / s0;
          for (Index a = 0; a < p; ++a) score[a] += g[a] - s1[a] * inv;
          if (want_info) {
            for (Index b = 0; b < p; ++b) {
              const double mb = s1[b] * inv;
              for (Index a = b; a < p; ++a) {
                info[a + b * p] += s2[a + b * p] * inv - s1[a] * inv * mb;
              }
            }
            if (!loglinear) {
              const Matrix& h = subj.hessian[failed];
              for (Index b = 0; b < p; ++b) {
                for (Index a = b; a < p; ++a) info[a + b * p] -= h(a, b);
              }
            }
          }
        }
        --j;
      }
    }
  }

  if (!std::isfinite(out.loglik)) throw_non_finite(theta);
  if (want_info) {
    out.information.triangularView<Eigen::StrictlyUpper>() =
        out.information.transpose().triangularView<Eigen::StrictlyUpper>();
  }
  return out;
}

double log_partial_likelihood(const RankData& rank, const RelativeRiskModel& model,
                              const Vector& theta) {
  return evaluate_likelihood(rank, model, theta, LikelihoodOrder::value).loglik;
}

Vector score(const RankData& rank, const RelativeRiskModel& model, const Vector& theta) {
  return evaluate_likelihood(rank, model, theta, LikelihoodOrder::score).score;
}

Matrix observed_information(const RankData& rank, const RelativeRiskModel& model,
                            const Vector& theta) {
  return evaluate_likelihood(rank, model, theta, LikelihoodOrder::information).information;
}

}  // namespace coxhoa
