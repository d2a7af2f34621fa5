#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include <nlohmann/json.hpp>

#include "coxhoa/bootstrap.hpp"
#include "coxhoa/error.hpp"
#include "coxhoa/fit.hpp"
#include "coxhoa/hoa.hpp"
#include "coxhoa/rng.hpp"
#include "coxhoa/study.hpp"
#include "coxhoa/survdata.hpp"
#include "coxhoa/version.hpp"

namespace coxhoa::cli {

namespace {

using nlohmann::json;

struct Options {
  std::string data;
  std::string psi;
  double psi0 = 0.0;
  std::string methods = "first-order";
  std::optional<Index> trials;
  std::optional<Index> covariance_trials;
  double alpha = 0.05;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  unsigned threads = 1;
};

json header(const char* command) {
  return {{"schema_version", kSchemaVersion},
          {"tool", "coxhoa"},
          {"version", kVersion},
          {"command", command}};
}

void emit(const json& report, const Options& opt, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (opt.out.empty()) {
    out << text;
    return;
  }
  std::ofstream file(opt.out, std::ios::binary);
  if (!file) throw ValidationError("cannot write output file '" + opt.out + "'");
  file << text;
}

// Name match first, then a 1-based column number.
Index resolve_psi(const std::string& psi, const std::vector<std::string>& names) {
  if (psi.empty()) return 0;
  const auto it = std::find(names.begin(), names.end(), psi);
  if (it != names.end()) return static_cast<Index>(it - names.begin());
  if (std::all_of(psi.begin(), psi.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
    const long k = std::stol(psi);
    if (k >= 1 && k <= static_cast<long>(names.size())) return static_cast<Index>(k - 1);
    throw ValidationError("--psi index " + psi + " is outside 1.." +
                          std::to_string(names.size()));
  }
  std::string known;
  for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
  throw ValidationError("--psi '" + psi + "' names no covariate (have " + known + ")");
}

struct Loaded {
  SurvivalSample sample;
  RankData rank;
  Index psi_index = 0;
};

Loaded load(const Options& opt) {
  if (opt.data.empty()) throw ValidationError("--data is required");
  Loaded l;
  l.sample = load_dataset_file(opt.data);
  l.rank = rank_reduce(l.sample);
  l.psi_index = resolve_psi(opt.psi, l.sample.covariate_names);
  return l;
}

json data_json(const Options& opt, const Loaded& l) {
  return {{"path", opt.data},
          {"subjects", l.rank.subjects()},
          {"failures", l.rank.failures()},
          {"strata", l.rank.strata().size()},
          {"covariates", l.sample.covariate_names}};
}

json named(const Vector& v, const std::vector<std::string>& names) {
  json j = json::object();
  for (Index k = 0; k < v.size(); ++k) j[names[static_cast<std::size_t>(k)]] = v(k);
  return j;
}

json fit_json(const FitResult& f, const std::vector<std::string>& names) {
  return {{"status", to_string(f.status)},
          {"iterations", f.iterations},
          {"loglik", f.loglik},
          {"score_norm", f.score_norm},
          {"theta", named(f.theta, names)}};
}

// Functional and nuisance completion rows, so nu in the output is reproducible.
json basis_json(const HypothesisSpec& spec) {
  json rows = json::array();
  for (Index i = 0; i < spec.completion().rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < spec.completion().cols(); ++k) row.push_back(spec.completion()(i, k));
    rows.push_back(row);
  }
  json a = json::array();
  for (Index k = 0; k < spec.functional().size(); ++k) a.push_back(spec.functional()(k));
  return {{"functional", a}, {"completion", rows}};
}

json hoa_json(const HoaResult& h) {
  return {{"r", h.r},   {"r_star", h.r_star}, {"np", h.np},
          {"inf", h.inf}, {"u", h.u},         {"c", h.c},
          {"p_lower", h.p_lower}, {"p_upper", h.p_upper},
          {"p_two_sided", std::min(1.0, 2.0 * std::min(h.p_lower, h.p_upper))}};
}

std::uint64_t seed_of(const Options& opt) { return opt.seed.value_or(1); }

int cmd_test(const Options& opt, std::ostream& out, std::ostream& err) {
  const auto methods = parse_methods(opt.methods);
  const Loaded l = load(opt);
  const auto& model = loglinear_model();
  const auto& names = l.sample.covariate_names;
  const HypothesisSpec spec = HypothesisSpec::coordinate(l.rank.dimension(), l.psi_index, opt.psi0);
  const std::uint64_t seed = seed_of(opt);
  const Index trials = opt.trials.value_or(10000);
  const Index cov_trials = opt.covariance_trials.value_or(2000);

  const FitResult fit_hat = fit_unconstrained(l.rank, model);
  if (!fit_hat.usable()) throw NumericalError("unconstrained fit failed");
  const FitResult fit_psi = fit_constrained(l.rank, model, spec);
  if (!fit_psi.usable()) throw NumericalError("constrained fit failed");

  json report = header("test");
  report["data"] = data_json(opt, l);
  report["hypothesis"] = {{"psi", names[static_cast<std::size_t>(l.psi_index)]},
                          {"index", l.psi_index + 1},
                          {"psi0", opt.psi0},
                          {"basis", basis_json(spec)}};
  json method_names = json::array();
  for (const auto m : methods) method_names.push_back(to_string(m));
  report["settings"] = {{"methods", method_names}, {"B", trials}, {"R", cov_trials},
                        {"seed", seed}};

  json warnings = json::array();
  if (fit_hat.status != FitStatus::converged) {
    warnings.push_back("unconstrained fit " + to_string(fit_hat.status) +
                       " (monotone likelihood); estimates are plateau values");
  }
  if (fit_psi.status != FitStatus::converged) {
    warnings.push_back("constrained fit " + to_string(fit_psi.status));
  }
  json fit = fit_json(fit_hat, names);
  const double psi_hat = spec.psi(fit_hat.theta);
  fit["psi_hat"] = psi_hat;
  if (fit_hat.status == FitStatus::converged) {
    Vector se(l.rank.dimension());
    for (Index k = 0; k < se.size(); ++k) {
      se(k) = wald_se(fit_hat, HypothesisSpec::coordinate(se.size(), k, 0.0));
    }
    fit["se"] = named(se, names);
    fit["psi_se"] = wald_se(fit_hat, spec);
  } else {
    fit["se"] = nullptr;
    fit["psi_se"] = nullptr;
  }
  report["fit"] = fit;
  report["constrained_fit"] = fit_json(fit_psi, names);
  const double r = signed_root(fit_hat, fit_psi, spec);
  report["r"] = r;

  auto require_converged = [&](Method m) {
    if (fit_hat.status != FitStatus::converged || fit_psi.status != FitStatus::converged) {
      throw NumericalError(to_string(m) + " needs converged fits of the analysis data");
    }
  };

  json results = json::object();
  for (const Method m : methods) {
    switch (m) {
      case Method::first_order: {
        const auto p = first_order_pvalues(r);
        results[to_string(m)] = {{"r", r},
                                 {"p_lower", p.lower},
                                 {"p_upper", p.upper},
                                 {"p_two_sided", p.two_sided}};
        break;
      }
      case Method::bootstrap: {
        BootstrapOptions bo;
        bo.trials = trials;
        bo.seed = seed;
        bo.threads = opt.threads;
        const auto b = bootstrap_pvalue(l.rank, model, spec, fit_hat, bo);
        results[to_string(m)] = {{"r", b.r_obs},
                                 {"p_lower", b.p_lower},
                                 {"p_upper", b.p_upper},
                                 {"p_two_sided", b.p_two_sided},
                                 {"trials", b.requested},
                                 {"completed", b.completed},
                                 {"failed", b.failed},
                                 {"divergent", b.divergent},
                                 {"seed", b.seed}};
        break;
      }
      case Method::rstar: {
        require_converged(m);
        CovarianceOptions co;
        co.trials = cov_trials;
        co.seed = derive_seed(seed, 1);
        co.threads = opt.threads;
        const auto cov = estimate_covariances(l.rank, model, fit_hat.theta, fit_psi.theta, co);
        json j = hoa_json(skovgaard_rstar(fit_hat, fit_psi, cov, spec));
        j["covariance_trials"] = cov.trials;
        results[to_string(m)] = j;
        break;
      }
      case Method::fixed_riskset: {
        require_converged(m);
        results[to_string(m)] = hoa_json(fixed_riskset_rstar(fit_hat, fit_psi, spec));
        break;
      }
    }
  }
  report["results"] = results;
  report["warnings"] = warnings;
  for (const auto& w : warnings) err << "warning: " << w.get<std::string>() << '\n';
  emit(report, opt, out);
  return kOk;
}

json bound_json(const ConfidenceBound& b, double alpha) {
  json trace = json::array();
  for (const auto& s : b.trace) trace.push_back({{"psi0", s.psi0}, {"p", s.p}});
  const double tol =
      2.0 * std::sqrt(alpha * (1.0 - alpha) / std::max<double>(1.0, static_cast<double>(b.completed)));
  return {{"value", b.value},
          {"p_check", b.p_check},
          {"completed", b.completed},
          {"within_two_se", std::abs(b.p_check - alpha) <= tol},
          {"grid_fallback", b.grid_fallback},
          {"at_estimate", b.at_estimate},
          {"trace", trace}};
}

int cmd_ci(const Options& opt, std::ostream& out) {
  const Loaded l = load(opt);
  const auto& model = loglinear_model();
  const HypothesisSpec direction = HypothesisSpec::coordinate(l.rank.dimension(), l.psi_index, 0.0);
  BootstrapOptions bo;
  bo.trials = opt.trials.value_or(10000);
  bo.seed = seed_of(opt);
  bo.threads = opt.threads;
  const auto ci = invert_ci(l.rank, model, direction, opt.alpha, bo);

  json report = header("ci");
  report["data"] = data_json(opt, l);
  report["hypothesis"] = {{"psi", l.sample.covariate_names[static_cast<std::size_t>(l.psi_index)]},
                          {"index", l.psi_index + 1},
                          {"basis", basis_json(direction)}};
  report["settings"] = {{"alpha", opt.alpha}, {"B", bo.trials}, {"seed", bo.seed}};
  report["psi_hat"] = ci.psi_hat;
  report["se"] = ci.se;
  report["one_sided_level"] = 1.0 - opt.alpha;
  report["lower"] = bound_json(ci.lower, opt.alpha);
  report["upper"] = bound_json(ci.upper, opt.alpha);
  emit(report, opt, out);
  return kOk;
}

int cmd_simstudy(const Options& opt, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (opt.config.empty()) throw ValidationError("--config is required for simstudy");
  std::ifstream in(opt.config);
  if (!in) throw ValidationError("cannot open config '" + opt.config + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config '" + opt.config + "' is not valid JSON: " + e.what());
  }
  StudyConfig config = study_config_from_json(j);
  if (opt.trials) config.bootstrap_trials = *opt.trials;
  if (opt.covariance_trials) config.covariance_trials = *opt.covariance_trials;
  if (opt.seed) config.seed = *opt.seed;
  if (sub.count("--method") > 0) config.methods = parse_methods(opt.methods);
  if (sub.count("--psi0") > 0) config.psi0 = opt.psi0;
  config.validate();

  StudyRunOptions ro;
  ro.threads = opt.threads;
  ro.out_dir = opt.out.empty() ? "coxhoa-study" : opt.out;
  ro.progress = [&err](Index done, Index total) {
    err << "simstudy: " << done << "/" << total << " datasets\n";
  };
  const StudyResult result = run_study(config, ro);
  json summary = study_summary_json(result);
  summary["out_dir"] = ro.out_dir;
  out << summary.dump(2) << '\n';
  return kOk;
}

json error_json(const char* kind, const std::string& message) {
  json j = header("error");
  j["error"] = {{"kind", kind}, {"message", message}};
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cox partial-likelihood inference with bootstrap and r* adjustments", "coxhoa"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub, bool data) {
    if (data) {
      sub->add_option("--data", opt.data, "CSV with time,status,covariates[,stratum]")->required();
      sub->add_option("--psi", opt.psi, "Interest covariate: name or 1-based column number");
    }
    sub->add_option("--B", opt.trials, "Bootstrap trials")->check(CLI::PositiveNumber);
    sub->add_option("--seed", opt.seed, "Master seed");
    sub->add_option("--out", opt.out, data ? "Report path (default stdout)" : "Output directory");
    sub->add_option("--threads", opt.threads, "Worker threads, 0 for all cores")
        ->capture_default_str();
  };

  auto* test = app.add_subcommand("test", "Test psi = psi0 on one dataset");
  add_common(test, true);
  test->add_option("--psi0", opt.psi0, "Hypothesized value")->capture_default_str();
  test->add_option("--method", opt.methods,
                   "Comma list of first-order, bootstrap, rstar, fixed-riskset")
      ->capture_default_str();
  test->add_option("--R", opt.covariance_trials, "Covariance-simulation trials")
      ->check(CLI::PositiveNumber);

  auto* ci = app.add_subcommand("ci", "Bootstrap confidence bounds by test inversion");
  add_common(ci, true);
  ci->add_option("--alpha", opt.alpha, "One-sided level of each bound")->capture_default_str();

  auto* study = app.add_subcommand("simstudy", "Simulation study from a JSON config");
  add_common(study, false);
  study->add_option("--config", opt.config, "Study config (JSON)")->required();
  study->add_option("--psi0", opt.psi0, "Override the config's psi0");
  study->add_option("--method", opt.methods, "Override the config's methods");
  study->add_option("--R", opt.covariance_trials, "Covariance-simulation trials")
      ->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    out << error_json("validation", e.what()).dump(2) << '\n';
    return kValidation;
  }

  try {
    if (*test) return cmd_test(opt, out, err);
    if (*ci) return cmd_ci(opt, out);
    return cmd_simstudy(opt, *study, out, err);
  } catch (const ValidationError& e) {
    out << error_json("validation", e.what()).dump(2) << '\n';
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const NumericalError& e) {
    out << error_json("numerical", e.what()).dump(2) << '\n';
    err << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    out << error_json("numerical", e.what()).dump(2) << '\n';
    err << "error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace coxhoa::cli
