#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coxhoa/hoa.hpp"
#include "coxhoa/refcensor.hpp"
#include "coxhoa/types.hpp"

namespace coxhoa {

enum class Method { first_order, bootstrap, rstar, fixed_riskset };

std::string to_string(Method method);
Method parse_method(std::string_view name);
// Comma-separated list; duplicates removed, order kept.
std::vector<Method> parse_methods(std::string_view list);

enum class HypothesisProtocol {
  fixed,       // psi0 from the config
  wald_lower,  // psi0 = psi_hat - 1.645 SE(psi_hat), per dataset
};

enum class CensoringSource {
  scenario,   // the scenario's own censoring mechanism
  reference,  // ranks regenerated by the reference censoring model at the truth
};

struct StudyConfig {
  std::string scenario = "gaussian-4";
  Index n = 20;
  double psi_true = 0.0;
  HypothesisProtocol protocol = HypothesisProtocol::fixed;
  double psi0 = 0.0;
  CensoringSource censoring = CensoringSource::scenario;
  Index datasets = 1000;
  Index bootstrap_trials = 1000;
  Index covariance_trials = 2000;
  std::uint64_t seed = 1;
  std::vector<Method> methods = {Method::first_order};
  std::vector<double> cut_points = {1.0, 2.5, 5.0, 10.0};  // nominal percentages
  Index checkpoint_every = 100;

  void validate() const;
  bool uses(Method m) const;
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& config);

// Per-method outcome for one dataset. Fields not produced by the method are
// NaN. `fallback` marks r* methods that fell back to first order;
// `available` is false when the method was not run or was aborted.
struct MethodOutcome {
  bool available = false;
  bool fallback = false;
  double statistic = std::numeric_limits<double>::quiet_NaN();  // r, or r*
  double np = std::numeric_limits<double>::quiet_NaN();
  double inf = std::numeric_limits<double>::quiet_NaN();
  double p_lower = std::numeric_limits<double>::quiet_NaN();
  double p_upper = std::numeric_limits<double>::quiet_NaN();
  Index completed = 0;  // bootstrap only
  Index failed = 0;     // bootstrap only
};

struct DatasetRecord {
  Index index = 0;
  bool excluded = false;
  std::string reason;  // empty unless excluded or a method fell back
  Index failures = 0;
  double psi_hat = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double psi0 = std::numeric_limits<double>::quiet_NaN();
  double r = std::numeric_limits<double>::quiet_NaN();
  MethodOutcome first_order;
  MethodOutcome bootstrap;
  MethodOutcome rstar;
  MethodOutcome fixed_riskset;

  const MethodOutcome& outcome(Method m) const;
};

// Analyses dataset `index` of the study. Its data come from
// RngStream(derive_seed(seed, index), 0); bootstrap and covariance
// simulations use further seeds derived from the same dataset seed.
DatasetRecord run_dataset(const StudyConfig& config, Index index);

struct TailRow {
  Method method = Method::first_order;
  Index datasets = 0;
  Index fallbacks = 0;
  std::vector<double> percent;  // lower-tail cuts ascending, then upper-tail cuts descending
  std::vector<double> se;       // binomial standard errors, same layout
};

struct TailTable {
  std::vector<std::string> columns;  // "<1%", ..., "<10%", ">10%", ..., ">1%"
  std::vector<TailRow> rows;
};

TailTable tail_table(const std::vector<DatasetRecord>& records, const StudyConfig& config);
void write_tail_table_csv(std::ostream& out, const TailTable& table);
nlohmann::json to_json(const TailTable& table);

void write_records_header(std::ostream& out);
void write_record_csv(std::ostream& out, const DatasetRecord& record);
std::vector<DatasetRecord> read_records_csv(std::istream& in);

// NP/INF regression over datasets where the Skovgaard r* was computed without
// fallback; nullopt when fewer than two are available or INF is constant.
std::optional<NpInfSummary> study_np_inf(const std::vector<DatasetRecord>& records);

struct StudyRunOptions {
  unsigned threads = 1;
  std::string out_dir;  // empty: no files, no checkpointing
  bool resume = true;
  std::function<void(Index done, Index total)> progress;
};

struct StudyResult {
  StudyConfig config;
  std::vector<DatasetRecord> records;
  TailTable table;
  Index excluded = 0;
  Index resumed_from = 0;
  std::optional<NpInfSummary> np_inf;
};

// Runs every dataset, in parallel across datasets. With an output directory,
// records.csv and checkpoint.json are flushed every checkpoint_every datasets
// and an interrupted run with the same config resumes after the last
// checkpoint; table.csv and summary.json are written at the end.
StudyResult run_study(const StudyConfig& config, const StudyRunOptions& options = {});

nlohmann::json study_summary_json(const StudyResult& result);

}  // namespace coxhoa
