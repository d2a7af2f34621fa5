#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "coxhoa/types.hpp"

namespace coxhoa {

// Subject-level right-censored survival data.
struct SurvivalSample {
  std::vector<double> time;
  std::vector<int> status;  // 1 = failure, 0 = censored
  Matrix covariates;        // n x p, row i is z_i
  std::vector<std::string> covariate_names;
  std::vector<int> stratum;  // empty means a single stratum

  Index size() const { return static_cast<Index>(time.size()); }
  Index dimension() const { return covariates.cols(); }
  bool stratified() const { return !stratum.empty(); }

  // Checks shapes, positive finite times and binary status. Throws
  // ValidationError naming the first offending subject.
  void validate() const;
};

// Rank summary of one stratum.
//
// `sequence` lists the stratum's subjects in the order they leave the risk
// set: the c_0 subjects censored before the first failure, then failure 1,
// the c_1 subjects censored in [t_(1), t_(2)), failure 2, and so on. The risk
// set of failure i is the suffix of `sequence` starting at riskset_start[i].
// Without ties riskset_start[i] == failure_pos[i]; tied failures share the
// start of their tie group.
struct StratumRanks {
  int label = 0;
  std::vector<Index> sequence;
  std::vector<Index> failure_pos;
  std::vector<Index> riskset_start;
  std::vector<Index> censoring;  // c_0, ..., c_m

  Index size() const { return static_cast<Index>(sequence.size()); }
  Index failures() const { return static_cast<Index>(failure_pos.size()); }

  std::vector<Index> failure_order() const;
  // Subjects at risk just prior to failure i (0-based), in sequence order.
  std::vector<Index> riskset_members(Index i) const;

  bool operator==(const StratumRanks&) const = default;
};

// Partial-likelihood-sufficient summary of a sample: per-stratum rank data
// plus the covariates, stored column-per-subject (p x n). The covariate block
// is shared and immutable, so bootstrap trials reuse it without copying.
class RankData {
 public:
  RankData() = default;
  RankData(std::shared_ptr<const Matrix> covariates_by_subject,
           std::vector<StratumRanks> strata);

  Index subjects() const { return covariates_ ? covariates_->cols() : 0; }
  Index dimension() const { return covariates_ ? covariates_->rows() : 0; }
  Index failures() const;

  const std::vector<StratumRanks>& strata() const { return strata_; }
  const Matrix& covariates() const { return *covariates_; }
  const std::shared_ptr<const Matrix>& shared_covariates() const {
    return covariates_;
  }
  auto covariate(Index subject) const { return covariates_->col(subject); }

  // Field-by-field equality of the rank summaries and covariate values.
  bool operator==(const RankData& other) const;

 private:
  std::shared_ptr<const Matrix> covariates_;
  std::vector<StratumRanks> strata_;
};

// Reads the CSV layout `time,status,<cov1>,...,<covp>[,stratum]`. A column
// named `stratum` (case-sensitive) is taken as the stratum label. Lines
// starting with '#' and blank lines are skipped. Errors carry the file line.
SurvivalSample load_dataset(std::istream& in);
SurvivalSample load_dataset_file(const std::string& path);

void write_dataset(std::ostream& out, const SurvivalSample& sample);

// Sorts each stratum by time and records failure order, risk sets and the
// censoring configuration. At equal times failures precede censorings, and
// tied failures are ordered by input index, each seeing the full pre-tie risk
// set. Throws ValidationError for a stratum without failures.
RankData rank_reduce(const SurvivalSample& sample);

}  // namespace coxhoa
