#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coxhoa/partial_lik.hpp"
#include "coxhoa/rng.hpp"
#include "coxhoa/survdata.hpp"

namespace coxhoa {

// Progressive Type II censoring plan for one stratum: c_0 subjects removed
// before the first failure, c_i after failure i, each chosen uniformly from
// the current risk set.
struct StratumPlan {
  int label = 0;
  std::vector<Index> subjects;   // sorted subject indices of the stratum
  std::vector<Index> censoring;  // c_0, ..., c_m
};

class ReferenceCensoringPlan {
 public:
  explicit ReferenceCensoringPlan(std::vector<StratumPlan> strata);

  // Copies each stratum's membership and censoring configuration.
  static ReferenceCensoringPlan from_ranks(const RankData& rank);

  const std::vector<StratumPlan>& strata() const { return strata_; }

 private:
  std::vector<StratumPlan> strata_;
};

// Draws T_i ~ Exponential(RR(z_i, theta)) for the listed subjects, one uniform
// per subject in list order, and returns them sorted by T (ties by position).
// `covariates_by_subject` is p x n, as stored in RankData.
std::vector<Index> generate_uncensored_ranks(const Vector& theta,
                                             const Matrix& covariates_by_subject,
                                             std::span<const Index> subjects,
                                             const RelativeRiskModel& model, RngStream& rng);

// Applies the censoring configuration to a full failure ordering. Censored
// groups are listed in subject-index order. Throws ValidationError when a
// stage asks for more removals than the risk set holds.
StratumRanks apply_progressive_type2(std::span<const Index> ordering,
                                     std::span<const Index> censoring, RngStream& rng,
                                     int label = 0);

// Simulates reference-censoring trials at a fixed generating parameter. Rates
// are computed once; each call to generate() consumes one RngStream.
class ReferenceTrialGenerator {
 public:
  ReferenceTrialGenerator(std::shared_ptr<const Matrix> covariates_by_subject,
                          ReferenceCensoringPlan plan, const RelativeRiskModel& model,
                          const Vector& theta);
  // Plan and covariates taken from the analysis data.
  ReferenceTrialGenerator(const RankData& analysis, const RelativeRiskModel& model,
                          const Vector& theta);

  RankData generate(RngStream& rng) const;
  const ReferenceCensoringPlan& plan() const { return plan_; }

 private:
  std::shared_ptr<const Matrix> covariates_;
  ReferenceCensoringPlan plan_;
  std::vector<double> rates_;
};

RankData simulate_reference_trial(const Vector& theta,
                                  std::shared_ptr<const Matrix> covariates_by_subject,
                                  const RelativeRiskModel& model,
                                  const ReferenceCensoringPlan& plan, RngStream& rng);

// Data-generating designs for simulation studies.
//   binary-arm      binary covariate, 3:1 ratio of ones to zeros, unit exponential
//                   failures, Uniform[0,4] censoring on half the sample
//                   (drawn from the larger arm); ~12.3% censored.
//   gaussian-k      k+1 standard normal covariates, the first carrying psi,
//                   Uniform[0,3.25] censoring on all; ~30% censored.
//   clinical-trial[-k]  gaussian-k covariates (k = 4 by default), Uniform[0,2]
//                   enrollment, administrative censoring at calendar time 7,
//                   constant hazard calibrated to 30% censoring.
enum class ScenarioKind { binary_arm, gaussian, clinical_trial };

struct Scenario {
  ScenarioKind kind = ScenarioKind::gaussian;
  int nuisance = 4;

  static Scenario parse(std::string_view id);
  std::string id() const;
  Index dimension() const { return kind == ScenarioKind::binary_arm ? 1 : nuisance + 1; }
};

SurvivalSample scenario_generate(const Scenario& scenario, Index n, double psi_true,
                                 RngStream& rng);

// Constant hazard giving the requested expected censoring fraction under
// Uniform[0,2] enrollment and administrative censoring at time 7.
double clinical_trial_hazard(double censoring_fraction = 0.3);

}  // namespace coxhoa
