#pragma once

#include <string>

#include "coxhoa/survdata.hpp"
#include "coxhoa/types.hpp"

namespace coxhoa {

// Relative risk RR(z, theta) > 0 of the proportional hazards model
// nu(t; z, theta) = nu0(t) RR(z, theta). Implementations work on the log
// scale and supply first and second derivatives of log RR in theta.
class RelativeRiskModel {
 public:
  virtual ~RelativeRiskModel() = default;

  virtual std::string name() const = 0;
  virtual bool is_loglinear() const { return false; }

  virtual double log_risk(const Eigen::Ref<const Vector>& z, const Vector& theta) const = 0;
  // Writes d log RR / d theta into `gradient` and d^2 log RR / d theta^2 into
  // `hessian`; both are pre-sized to p.
  virtual void log_risk_derivatives(const Eigen::Ref<const Vector>& z, const Vector& theta,
                                    Eigen::Ref<Vector> gradient,
                                    Eigen::Ref<Matrix> hessian) const = 0;

  double relative_risk(const Eigen::Ref<const Vector>& z, const Vector& theta) const;
};

// RR(z, theta) = exp(z . theta).
class LogLinearRisk final : public RelativeRiskModel {
 public:
  std::string name() const override { return "loglinear"; }
  bool is_loglinear() const override { return true; }
  double log_risk(const Eigen::Ref<const Vector>& z, const Vector& theta) const override;
  void log_risk_derivatives(const Eigen::Ref<const Vector>& z, const Vector& theta,
                            Eigen::Ref<Vector> gradient,
                            Eigen::Ref<Matrix> hessian) const override;
};

const RelativeRiskModel& loglinear_model();

enum class LikelihoodOrder { value, score, information };

struct LikelihoodTerms {
  double loglik = 0.0;
  Vector score;        // empty unless order >= score
  Matrix information;  // empty unless order == information
};

// Log partial likelihood and, on request, its gradient and negative Hessian.
// Risk-set sums are accumulated backwards over each stratum's removal
// sequence with a running maximum of the linear predictor, so one pass costs
// O(n p^2). Throws NumericalError if log RR is not finite.
LikelihoodTerms evaluate_likelihood(const RankData& rank, const RelativeRiskModel& model,
                                    const Vector& theta,
                                    LikelihoodOrder order = LikelihoodOrder::information);

double log_partial_likelihood(const RankData& rank, const RelativeRiskModel& model,
                              const Vector& theta);
Vector score(const RankData& rank, const RelativeRiskModel& model, const Vector& theta);
Matrix observed_information(const RankData& rank, const RelativeRiskModel& model,
                            const Vector& theta);

}  // namespace coxhoa
