#include "coxhoa/study.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "coxhoa/bootstrap.hpp"
#include "coxhoa/error.hpp"
#include "coxhoa/fit.hpp"
#include "coxhoa/parallel.hpp"
#include "coxhoa/rng.hpp"
#include "coxhoa/version.hpp"

namespace coxhoa {

std::string to_string(Method method) {
  switch (method) {
    case Method::first_order: return "first-order";
    case Method::bootstrap: return "bootstrap";
    case Method::rstar: return "rstar";
    case Method::fixed_riskset: return "fixed-riskset";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "first-order") return Method::first_order;
  if (name == "bootstrap") return Method::bootstrap;
  if (name == "rstar") return Method::rstar;
  if (name == "fixed-riskset") return Method::fixed_riskset;
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected first-order, bootstrap, rstar, fixed-riskset)");
}

std::vector<Method> parse_methods(std::string_view list) {
  std::vector<Method> methods;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    auto item = list.substr(start, comma == std::string_view::npos ? comma : comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      const Method m = parse_method(item);
      if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (methods.empty()) throw ValidationError("no methods given");
  return methods;
}

void StudyConfig::validate() const {
  const Scenario s = Scenario::parse(scenario);
  if (n < 2) throw ValidationError("n must be at least 2");
  if (n < s.dimension() + 2) throw ValidationError("n is too small for the scenario's covariates");
  if (datasets < 1) throw ValidationError("datasets must be positive");
  if (bootstrap_trials < 1) throw ValidationError("bootstrap_trials must be positive");
  if (covariance_trials < 100) throw ValidationError("covariance_trials must be at least 100");
  if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be positive");
  if (methods.empty()) throw ValidationError("methods must not be empty");
  if (!std::isfinite(psi_true) || !std::isfinite(psi0)) {
    throw ValidationError("psi values must be finite");
  }
  if (cut_points.empty()) throw ValidationError("cut_points must not be empty");
  for (std::size_t i = 0; i < cut_points.size(); ++i) {
    if (!(cut_points[i] > 0.0 && cut_points[i] < 50.0)) {
      throw ValidationError("cut points are percentages in (0, 50)");
    }
    if (i > 0 && !(cut_points[i] > cut_points[i - 1])) {
      throw ValidationError("cut points must be strictly increasing");
    }
  }
}

bool StudyConfig::uses(Method m) const {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

StudyConfig study_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "scenario",         "n",          "psi_true",   "protocol",          "psi0",
      "censoring",        "datasets",   "B",          "R",                 "seed",
      "methods",          "cut_points", "checkpoint_every"};
  if (!j.is_object()) throw ValidationError("study config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("unknown study config key '" + key + "'");
    }
  }
  StudyConfig c;
  try {
    c.scenario = j.value("scenario", c.scenario);
    c.n = j.value("n", c.n);
    c.psi_true = j.value("psi_true", c.psi_true);
    const std::string protocol = j.value("protocol", std::string("fixed"));
    if (protocol == "fixed") {
      c.protocol = HypothesisProtocol::fixed;
    } else if (protocol == "wald-lower") {
      c.protocol = HypothesisProtocol::wald_lower;
    } else {
      throw ValidationError("protocol must be 'fixed' or 'wald-lower'");
    }
    c.psi0 = j.value("psi0", c.psi0);
    const std::string censoring = j.value("censoring", std::string("scenario"));
    if (censoring == "scenario") {
      c.censoring = CensoringSource::scenario;
    } else if (censoring == "reference") {
      c.censoring = CensoringSource::reference;
    } else {
      throw ValidationError("censoring must be 'scenario' or 'reference'");
    }
    c.datasets = j.value("datasets", c.datasets);
    c.bootstrap_trials = j.value("B", c.bootstrap_trials);
    c.covariance_trials = j.value("R", c.covariance_trials);
    c.seed = j.value("seed", c.seed);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) {
        const Method parsed = parse_method(m.get<std::string>());
        if (!c.uses(parsed)) c.methods.push_back(parsed);
      }
    }
    if (j.contains("cut_points")) c.cut_points = j.at("cut_points").get<std::vector<double>>();
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid study config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const StudyConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto m : c.methods) methods.push_back(to_string(m));
  return {
      {"scenario", c.scenario},
      {"n", c.n},
      {"psi_true", c.psi_true},
      {"protocol", c.protocol == HypothesisProtocol::fixed ? "fixed" : "wald-lower"},
      {"psi0", c.psi0},
      {"censoring", c.censoring == CensoringSource::scenario ? "scenario" : "reference"},
      {"datasets", c.datasets},
      {"B", c.bootstrap_trials},
      {"R", c.covariance_trials},
      {"seed", c.seed},
      {"methods", methods},
      {"cut_points", c.cut_points},
      {"checkpoint_every", c.checkpoint_every},
  };
}

const MethodOutcome& DatasetRecord::outcome(Method m) const {
  switch (m) {
    case Method::first_order: return first_order;
    case Method::bootstrap: return bootstrap;
    case Method::rstar: return rstar;
    case Method::fixed_riskset: return fixed_riskset;
  }
  return first_order;
}

namespace {

std::string sanitize(std::string text) {
  for (auto& ch : text) {
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
  }
  return text;
}

void note(DatasetRecord& record, const std::string& what) {
  if (!record.reason.empty()) record.reason += " | ";
  record.reason += sanitize(what);
}

MethodOutcome hoa_outcome(const HoaResult& h) {
  MethodOutcome o;
  o.available = true;
  o.statistic = h.r_star;
  o.np = h.np;
  o.inf = h.inf;
  o.p_lower = h.p_lower;
  o.p_upper = h.p_upper;
  return o;
}

MethodOutcome hoa_fallback(double r) {
  MethodOutcome o;
  o.available = true;
  o.fallback = true;
  o.statistic = r;
  const auto p = first_order_pvalues(r);
  o.p_lower = p.lower;
  o.p_upper = p.upper;
  return o;
}

}  // namespace

DatasetRecord run_dataset(const StudyConfig& config, Index index) {
  const Scenario scenario = Scenario::parse(config.scenario);
  const RelativeRiskModel& model = loglinear_model();
  const std::uint64_t dataset_seed = derive_seed(config.seed, static_cast<std::uint64_t>(index));

  DatasetRecord record;
  record.index = index;
  try {
    RngStream data_rng(dataset_seed, 0);
    const SurvivalSample sample = scenario_generate(scenario, config.n, config.psi_true, data_rng);
    RankData rank = rank_reduce(sample);
    if (config.censoring == CensoringSource::reference) {
      Vector truth = Vector::Zero(scenario.dimension());
      truth(0) = config.psi_true;
      RngStream ref_rng(dataset_seed, 1);
      rank = ReferenceTrialGenerator(rank, model, truth).generate(ref_rng);
    }
    record.failures = rank.failures();

    HypothesisSpec spec = HypothesisSpec::coordinate(scenario.dimension(), 0, config.psi0);
    const FitResult fit_hat = fit_unconstrained(rank, model);
    if (fit_hat.status != FitStatus::converged) {
      record.excluded = true;
      note(record, "unconstrained fit " + to_string(fit_hat.status));
      return record;
    }
    record.psi_hat = spec.psi(fit_hat.theta);
    record.se = wald_se(fit_hat, spec);
    if (config.protocol == HypothesisProtocol::wald_lower) {
      spec = spec.with_psi0(record.psi_hat - 1.645 * record.se);
    }
    record.psi0 = spec.psi0();
    const FitResult fit_psi = fit_constrained(rank, model, spec);
    if (fit_psi.status != FitStatus::converged) {
      record.excluded = true;
      note(record, "constrained fit " + to_string(fit_psi.status));
      return record;
    }
    record.r = signed_root(fit_hat, fit_psi, spec);

    const auto fo = first_order_pvalues(record.r);
    record.first_order.available = true;
    record.first_order.statistic = record.r;
    record.first_order.p_lower = fo.lower;
    record.first_order.p_upper = fo.upper;

    if (config.uses(Method::bootstrap)) {
      BootstrapOptions opts;
      opts.trials = config.bootstrap_trials;
      opts.seed = derive_seed(dataset_seed, 2);
      opts.threads = 1;
      try {
        const auto b = bootstrap_pvalue(rank, model, spec, fit_hat, opts);
        record.bootstrap.available = true;
        record.bootstrap.statistic = b.r_obs;
        record.bootstrap.p_lower = b.p_lower;
        record.bootstrap.p_upper = b.p_upper;
        record.bootstrap.completed = b.completed;
        record.bootstrap.failed = b.failed;
      } catch (const NumericalError& e) {
        note(record, std::string("bootstrap: ") + e.what());
      }
    }

    if (config.uses(Method::rstar)) {
      try {
        CovarianceOptions opts;
        opts.trials = config.covariance_trials;
        opts.seed = derive_seed(dataset_seed, 3);
        const auto cov = estimate_covariances(rank, model, fit_hat.theta, fit_psi.theta, opts);
        record.rstar = hoa_outcome(skovgaard_rstar(fit_hat, fit_psi, cov, spec));
      } catch (const NumericalError& e) {
        note(record, std::string("rstar: ") + e.what());
        record.rstar = hoa_fallback(record.r);
      }
    }

    if (config.uses(Method::fixed_riskset)) {
      try {
        record.fixed_riskset = hoa_outcome(fixed_riskset_rstar(fit_hat, fit_psi, spec));
      } catch (const NumericalError& e) {
        note(record, std::string("fixed-riskset: ") + e.what());
        record.fixed_riskset = hoa_fallback(record.r);
      }
    }
  } catch (const NumericalError& e) {
    record.excluded = true;
    note(record, e.what());
  } catch (const ValidationError& e) {
    // e.g. a simulated stratum without failures
    record.excluded = true;
    note(record, e.what());
  }
  return record;
}

TailTable tail_table(const std::vector<DatasetRecord>& records, const StudyConfig& config) {
  TailTable table;
  auto label = [](double cut) {
    std::ostringstream s;
    s << cut << '%';
    return s.str();
  };
  for (const double c : config.cut_points) table.columns.push_back("<" + label(c));
  for (auto it = config.cut_points.rbegin(); it != config.cut_points.rend(); ++it) {
    table.columns.push_back(">" + label(*it));
  }

  for (const Method m : config.methods) {
    TailRow row;
    row.method = m;
    const std::size_t cols = table.columns.size();
    std::vector<Index> counts(cols, 0);
    for (const auto& rec : records) {
      if (rec.excluded) continue;
      const MethodOutcome& o = rec.outcome(m);
      if (!o.available) continue;
      ++row.datasets;
      if (o.fallback) ++row.fallbacks;
      std::size_t col = 0;
      for (const double c : config.cut_points) {
        if (o.p_lower < c / 100.0) ++counts[col];
        ++col;
      }
      for (auto it = config.cut_points.rbegin(); it != config.cut_points.rend(); ++it) {
        if (o.p_upper < *it / 100.0) ++counts[col];
        ++col;
      }
    }
    for (std::size_t col = 0; col < cols; ++col) {
      const double n = static_cast<double>(row.datasets);
      const double f = n > 0 ? static_cast<double>(counts[col]) / n : 0.0;
      row.percent.push_back(100.0 * f);
      row.se.push_back(n > 0 ? 100.0 * std::sqrt(f * (1.0 - f) / n) : 0.0);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_tail_table_csv(std::ostream& out, const TailTable& table) {
  out << "method,statistic,datasets";
  for (const auto& c : table.columns) out << ',' << c;
  out << '\n';
  auto emit = [&](const TailRow& row, const char* stat, const std::vector<double>& values) {
    out << to_string(row.method) << ',' << stat << ',' << row.datasets;
    char buf[32];
    for (const double v : values) {
      std::snprintf(buf, sizeof buf, "%.2f", v);
      out << ',' << buf;
    }
    out << '\n';
  };
  for (const auto& row : table.rows) {
    emit(row, "percent", row.percent);
    emit(row, "se", row.se);
  }
}

nlohmann::json to_json(const TailTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    rows.push_back({{"method", to_string(row.method)},
                    {"datasets", row.datasets},
                    {"fallbacks", row.fallbacks},
                    {"percent", row.percent},
                    {"se", row.se}});
  }
  return {{"columns", table.columns}, {"rows", rows}};
}

namespace {

constexpr const char* kRecordColumns[] = {
    "index",        "excluded",     "reason",        "failures",       "psi_hat",
    "se",           "psi0",         "r",             "fo_p_lower",     "fo_p_upper",
    "boot_available", "boot_r",     "boot_p_lower",  "boot_p_upper",   "boot_completed",
    "boot_failed",  "rstar_available", "rstar_fallback", "rstar",      "rstar_np",
    "rstar_inf",    "rstar_p_lower", "rstar_p_upper", "fr_available",  "fr_fallback",
    "fr_rstar",     "fr_np",        "fr_inf",        "fr_p_lower",     "fr_p_upper"};
constexpr std::size_t kRecordWidth = std::size(kRecordColumns);

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("malformed number '" + std::string(s) + "' in records file");
  }
  return v;
}

Index parse_index(std::string_view s) {
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError("malformed integer '" + std::string(s) + "' in records file");
  }
  return v;
}

}  // namespace

void write_records_header(std::ostream& out) {
  for (std::size_t i = 0; i < kRecordWidth; ++i) out << (i ? "," : "") << kRecordColumns[i];
  out << '\n';
}

void write_record_csv(std::ostream& out, const DatasetRecord& r) {
  auto b = [](bool v) { return v ? "1" : "0"; };
  const auto d = format_double;
  out << r.index << ',' << b(r.excluded) << ',' << sanitize(r.reason) << ',' << r.failures << ','
      << d(r.psi_hat) << ',' << d(r.se) << ',' << d(r.psi0) << ',' << d(r.r) << ','
      << d(r.first_order.p_lower) << ',' << d(r.first_order.p_upper) << ','
      << b(r.bootstrap.available) << ',' << d(r.bootstrap.statistic) << ','
      << d(r.bootstrap.p_lower) << ',' << d(r.bootstrap.p_upper) << ',' << r.bootstrap.completed
      << ',' << r.bootstrap.failed << ',' << b(r.rstar.available) << ',' << b(r.rstar.fallback)
      << ',' << d(r.rstar.statistic) << ',' << d(r.rstar.np) << ',' << d(r.rstar.inf) << ','
      << d(r.rstar.p_lower) << ',' << d(r.rstar.p_upper) << ',' << b(r.fixed_riskset.available)
      << ',' << b(r.fixed_riskset.fallback) << ',' << d(r.fixed_riskset.statistic) << ','
      << d(r.fixed_riskset.np) << ',' << d(r.fixed_riskset.inf) << ','
      << d(r.fixed_riskset.p_lower) << ',' << d(r.fixed_riskset.p_upper) << '\n';
}

std::vector<DatasetRecord> read_records_csv(std::istream& in) {
  std::vector<DatasetRecord> records;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string_view> f;
    std::string_view view(line);
    std::size_t start = 0;
    while (true) {
      const auto comma = view.find(',', start);
      f.push_back(view.substr(start, comma == std::string_view::npos ? comma : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() != kRecordWidth) throw ValidationError("records file has a malformed row");
    DatasetRecord r;
    std::size_t k = 0;
    auto flag = [&] { return f[k++] == "1"; };
    auto num = [&] { return parse_double(f[k++]); };
    auto idx = [&] { return parse_index(f[k++]); };
    r.index = idx();
    r.excluded = flag();
    r.reason = std::string(f[k++]);
    r.failures = idx();
    r.psi_hat = num();
    r.se = num();
    r.psi0 = num();
    r.r = num();
    r.first_order.p_lower = num();
    r.first_order.p_upper = num();
    r.first_order.available = !r.excluded;
    r.first_order.statistic = r.r;
    r.bootstrap.available = flag();
    r.bootstrap.statistic = num();
    r.bootstrap.p_lower = num();
    r.bootstrap.p_upper = num();
    r.bootstrap.completed = idx();
    r.bootstrap.failed = idx();
    r.rstar.available = flag();
    r.rstar.fallback = flag();
    r.rstar.statistic = num();
    r.rstar.np = num();
    r.rstar.inf = num();
    r.rstar.p_lower = num();
    r.rstar.p_upper = num();
    r.fixed_riskset.available = flag();
    r.fixed_riskset.fallback = flag();
    r.fixed_riskset.statistic = num();
    r.fixed_riskset.np = num();
    r.fixed_riskset.inf = num();
    r.fixed_riskset.p_lower = num();
    r.fixed_riskset.p_upper = num();
    records.push_back(std::move(r));
  }
  return records;
}

std::optional<NpInfSummary> study_np_inf(const std::vector<DatasetRecord>& records) {
  std::vector<HoaResult> hoa;
  for (const auto& r : records) {
    if (r.excluded || !r.rstar.available || r.rstar.fallback) continue;
    HoaResult h;
    h.r = r.r;
    h.np = r.rstar.np;
    h.inf = r.rstar.inf;
    h.r_star = r.rstar.statistic;
    hoa.push_back(h);
  }
  if (hoa.size() < 2) return std::nullopt;
  try {
    return np_inf_diagnostics(hoa);
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

namespace {

namespace fs = std::filesystem;

void write_checkpoint(const fs::path& dir, const StudyConfig& config, Index completed) {
  const nlohmann::json cp = {{"config", to_json(config)}, {"completed", completed}};
  const fs::path tmp = dir / "checkpoint.json.tmp";
  {
    std::ofstream out(tmp);
    out << cp.dump(2) << '\n';
  }
  fs::rename(tmp, dir / "checkpoint.json");
}

std::vector<DatasetRecord> load_checkpoint(const fs::path& dir, const StudyConfig& config) {
  std::ifstream cp_in(dir / "checkpoint.json");
  if (!cp_in) return {};
  nlohmann::json cp;
  try {
    cp = nlohmann::json::parse(cp_in);
  } catch (const nlohmann::json::exception&) {
    return {};
  }
  if (!cp.contains("config") || cp.at("config") != to_json(config)) return {};
  const Index completed = cp.value("completed", Index{0});
  std::ifstream rec_in(dir / "records.csv");
  if (!rec_in) return {};
  auto records = read_records_csv(rec_in);
  if (static_cast<Index>(records.size()) < completed) return {};
  records.resize(static_cast<std::size_t>(completed));
  return records;
}

}  // namespace

StudyResult run_study(const StudyConfig& config, const StudyRunOptions& options) {
  config.validate();
  StudyResult result;
  result.config = config;

  const bool files = !options.out_dir.empty();
  fs::path dir;
  if (files) {
    dir = options.out_dir;
    fs::create_directories(dir);
    if (options.resume) result.records = load_checkpoint(dir, config);
    result.resumed_from = static_cast<Index>(result.records.size());
    std::ofstream rec(dir / "records.csv", std::ios::trunc);
    write_records_header(rec);
    for (const auto& r : result.records) write_record_csv(rec, r);
  }

  Index done = result.resumed_from;
  while (done < config.datasets) {
    const Index chunk = std::min(config.checkpoint_every, config.datasets - done);
    std::vector<DatasetRecord> batch(static_cast<std::size_t>(chunk));
    parallel_for(batch.size(), options.threads, [&](std::size_t i) {
      batch[i] = run_dataset(config, done + static_cast<Index>(i));
    });
    if (files) {
      std::ofstream rec(dir / "records.csv", std::ios::app);
      for (const auto& r : batch) write_record_csv(rec, r);
      rec.close();
      write_checkpoint(dir, config, done + chunk);
    }
    for (auto& r : batch) result.records.push_back(std::move(r));
    done += chunk;
    if (options.progress) options.progress(done, config.datasets);
  }

  for (const auto& r : result.records) {
    if (r.excluded) ++result.excluded;
  }
  result.table = tail_table(result.records, config);
  result.np_inf = study_np_inf(result.records);

  if (files) {
    std::ofstream table(dir / "table.csv");
    write_tail_table_csv(table, result.table);
    std::ofstream summary(dir / "summary.json");
    summary << study_summary_json(result).dump(2) << '\n';
  }
  return result;
}

nlohmann::json study_summary_json(const StudyResult& result) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["tool"] = "coxhoa";
  j["version"] = kVersion;
  j["command"] = "simstudy";
  j["config"] = to_json(result.config);
  j["datasets"] = static_cast<Index>(result.records.size());
  j["excluded"] = result.excluded;

  nlohmann::json reasons = nlohmann::json::object();
  Index boot_failed_trials = 0;
  Index boot_aborted = 0;
  for (const auto& r : result.records) {
    if (r.excluded) reasons[r.reason] = reasons.value(r.reason, 0) + 1;
    if (!r.excluded && result.config.uses(Method::bootstrap)) {
      if (r.bootstrap.available) {
        boot_failed_trials += r.bootstrap.failed;
      } else {
        ++boot_aborted;
      }
    }
  }
  j["excluded_reasons"] = reasons;
  if (result.config.uses(Method::bootstrap)) {
    j["bootstrap"] = {{"failed_trials", boot_failed_trials}, {"aborted_datasets", boot_aborted}};
  }
  j["table"] = to_json(result.table);
  if (result.np_inf) {
    const auto& s = *result.np_inf;
    j["np_inf"] = {{"count", s.count},         {"slope", s.slope},
                   {"intercept", s.intercept}, {"mean_np", s.mean_np},
                   {"mean_inf", s.mean_inf},   {"mean_abs_np", s.mean_abs_np},
                   {"mean_abs_inf", s.mean_abs_inf}};
  }
  return j;
}

}  // namespace coxhoa
