// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//   coxhoa_acceptance [--only 1,3,...] [--smoke] [--threads N]

#include <CLI11.hpp>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "coxhoa/bootstrap.hpp"
#include "coxhoa/error.hpp"
#include "coxhoa/hoa.hpp"
#include "coxhoa/parallel.hpp"
#include "coxhoa/refcensor.hpp"
#include "coxhoa/rng.hpp"
#include "coxhoa/study.hpp"
#include "oracles.hpp"

using namespace coxhoa;
namespace fs = std::filesystem;

namespace {

// Tolerances and targets.
constexpr double kLikAbsTol = 1e-10;
constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-6;
constexpr double kSeMultiple = 3.0;
constexpr double kTable1Gaussian = 9.7;
constexpr double kTable1Binary = 6.6;
constexpr double kTable1Tol = 0.8;
constexpr double kBootLo = 3.6, kBootHi = 6.6;
constexpr double kRstarLo = 3.4, kRstarHi = 6.4;
constexpr double kFixedRisksetMin = 7.5;
constexpr double kSlope4Lo = 2.5, kSlope4Hi = 5.5;
constexpr double kSlope9Lo = 6.0, kSlope9Hi = 11.0;
constexpr double kNpOverInf = 2.0;
constexpr double kKsLevel = 0.01;
constexpr double kCoverage = 94.8;
constexpr double kCoverageTol = 1.5;

struct Settings {
  bool smoke = false;
  unsigned threads = 0;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

StudyConfig base_config(const char* scenario, Index n, Index datasets, std::uint64_t seed) {
  StudyConfig c;
  c.scenario = scenario;
  c.n = n;
  c.datasets = datasets;
  c.seed = seed;
  return c;
}

// Tail percentage of `m` in table column `column`, e.g. "<5%".
double tail(const StudyResult& r, Method m, const char* column) {
  for (const auto& row : r.table.rows) {
    if (row.method != m) continue;
    for (std::size_t k = 0; k < r.table.columns.size(); ++k) {
      if (r.table.columns[k] == column) return row.percent[k];
    }
  }
  throw std::runtime_error(std::string("no ") + column + " column for " + to_string(m));
}

double lower5(const StudyResult& r, Method m) { return tail(r, m, "<5%"); }

StudyResult study(const StudyConfig& c, const Settings& s) {
  StudyRunOptions o;
  o.threads = s.threads;
  return run_study(c, o);
}

Outcome criterion1(const Settings&) {
  std::mt19937_64 gen(101);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const Index n = 2 + rep % 7;
    const Index p = 1 + rep % 3;
    const auto s = oracle::random_sample(gen, n, p, rep % 2 == 0, 0.3, 1 + rep % 2);
    Vector theta(p);
    for (Index k = 0; k < p; ++k) theta(k) = 1.5 * normal(gen);
    const double got = log_partial_likelihood(rank_reduce(s), loglinear_model(), theta);
    worst = std::max(worst, std::abs(got - oracle::loglik(s, theta)));
  }
  return {worst < kLikAbsTol, "200 datasets n <= 8, max abs error " + fmt("%.3g", worst)};
}

Outcome criterion2(const Settings&) {
  std::mt19937_64 gen(102);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto& m = loglinear_model();
  double worst_u = 0.0;
  double worst_j = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index p = 1 + rep % 5;
    const auto s = oracle::random_sample(gen, 5 + rep % 20, p, rep % 3 == 0, 0.25, 1 + rep % 2);
    const auto r = rank_reduce(s);
    Vector theta(p);
    for (Index k = 0; k < p; ++k) theta(k) = 0.7 * normal(gen);
    const auto terms = evaluate_likelihood(r, m, theta);
    const Vector fd_u = oracle::fd_gradient(
        [&](const Vector& x) { return log_partial_likelihood(r, m, x); }, theta, kFdStep);
    const Matrix fd_j =
        -oracle::fd_jacobian([&](const Vector& x) { return score(r, m, x); }, theta, kFdStep);
    worst_u = std::max(worst_u, oracle::relative_error(terms.score, fd_u));
    worst_j = std::max(worst_j, oracle::relative_error(terms.information, fd_j));
  }
  return {worst_u < kFdRelTol && worst_j < kFdRelTol,
          "100 pairs, max rel error score " + fmt("%.3g", worst_u) + ", information " +
              fmt("%.3g", worst_j)};
}

Outcome criterion3(const Settings& s) {
  RngStream rng(103, 0);
  const auto base = scenario_generate(Scenario::parse("gaussian-4"), 20, 0.0, rng);
  const auto& model = loglinear_model();
  const auto spec = HypothesisSpec::coordinate(5, 0, 0.3);
  struct Values {
    double ell, r, r_star, p;
    Vector theta;
  };
  auto analyse = [&](const SurvivalSample& sample) {
    const auto rank = rank_reduce(sample);
    const auto hat = fit_unconstrained(rank, model);
    const auto psi = fit_constrained(rank, model, spec);
    CovarianceOptions co;
    co.trials = 500;
    co.seed = 31;
    co.threads = s.threads;
    const auto cov = estimate_covariances(rank, model, hat.theta, psi.theta, co);
    BootstrapOptions bo;
    bo.trials = 500;
    bo.seed = 32;
    bo.threads = s.threads;
    return Values{hat.loglik, signed_root(hat, psi, spec),
                  skovgaard_rstar(hat, psi, cov, spec).r_star,
                  bootstrap_pvalue(rank, model, spec, hat, bo).p_lower, hat.theta};
  };
  const Values a = analyse(base);
  bool same = true;
  for (const auto& f : std::vector<std::function<double(double)>>{
           [](double t) { return t * t * t; }, [](double t) { return std::log1p(t); }}) {
    auto moved = base;
    for (auto& t : moved.time) t = f(t);
    const Values b = analyse(moved);
    same = same && a.ell == b.ell && a.r == b.r && a.r_star == b.r_star && a.p == b.p &&
           a.theta == b.theta;
  }
  return {same, std::string("t^3 and log(1+t): loglik, theta, r, r*, bootstrap p ") +
                    (same ? "bit-identical" : "differ")};
}

Outcome criterion4(const Settings& s) {
  std::vector<std::string> notes;
  bool pass = true;
  {
    Matrix z(4, 2);
    z << 0.9, -0.4, -0.6, 1.1, 0.2, 0.5, -1.3, -0.8;
    const Vector theta = (Vector(2) << 0.8, -0.5).finished();
    const std::vector<Index> subjects = {0, 1, 2, 3};
    const std::vector<Index> c = {1, 1, 0};
    const auto exact = oracle::enumerate_outcomes(subjects, c, z, theta);
    const ReferenceCensoringPlan plan({StratumPlan{0, subjects, c}});
    const ReferenceTrialGenerator gen(std::make_shared<const Matrix>(z.transpose()), plan,
                                      loglinear_model(), theta);
    const int trials = 100000;
    std::map<oracle::Outcome, int> counts;
    for (int b = 0; b < trials; ++b) {
      RngStream rng(104, static_cast<std::uint64_t>(b));
      ++counts[gen.generate(rng).strata()[0].sequence];
    }
    double worst = 0.0;
    bool unexpected = false;
    for (const auto& [o, n] : counts) unexpected = unexpected || !exact.count(o);
    for (const auto& [o, p] : exact) {
      const double se = std::sqrt(p * (1.0 - p) / trials);
      worst = std::max(worst, std::abs(counts[o] / double(trials) - p) / se);
    }
    pass = pass && !unexpected && worst < kSeMultiple;
    // Context only, not part of the verdict: a joint goodness-of-fit test at 1e6 trials.
    std::map<oracle::Outcome, int> big;
    const int big_trials = 1000000;
    for (int b = 0; b < big_trials; ++b) {
      RngStream rng(107, static_cast<std::uint64_t>(b));
      ++big[gen.generate(rng).strata()[0].sequence];
    }
    double chi2 = 0.0;
    for (const auto& [o, p] : exact) {
      const double e = p * big_trials;
      chi2 += (big[o] - e) * (big[o] - e) / e;
    }
    const boost::math::chi_squared dist(static_cast<double>(exact.size() - 1));
    notes.push_back("n=4 c=(1,1,0): " + std::to_string(exact.size()) +
                    " outcomes, max |dev|/SE " + fmt("%.2f", worst) +
                    " at 1e5 trials [context: chi-square at 1e6 trials p = " +
                    fmt("%.3f", boost::math::cdf(boost::math::complement(dist, chi2))) + "]");
  }
  {
    Matrix z(5, 2);
    z << 0.5, -1.0, 1.2, 0.3, -0.7, 0.8, 0.1, -0.2, -1.1, 1.4;
    const std::vector<Index> subjects = {0, 1, 2, 3, 4};
    const std::vector<Index> c = {1, 0, 1, 0};
    const Matrix exact = oracle::exact_score_variance(subjects, c, z, Vector::Zero(2));
    const ReferenceCensoringPlan plan({StratumPlan{0, subjects, c}});
    RngStream rng(105, 0);
    const RankData analysis = simulate_reference_trial(
        Vector::Zero(2), std::make_shared<const Matrix>(z.transpose()), loglinear_model(), plan,
        rng);
    CovarianceOptions co;
    co.trials = 50000;
    co.seed = 106;
    co.threads = s.threads;
    const auto cov =
        estimate_covariances(analysis, loglinear_model(), Vector::Zero(2), Vector::Zero(2), co);
    double worst = 0.0;
    for (Index a = 0; a < 2; ++a) {
      for (Index b = 0; b < 2; ++b) {
        worst = std::max(worst, std::abs(cov.i_hat(a, b) - exact(a, b)) / cov.i_hat_se(a, b));
      }
    }
    pass = pass && worst < kSeMultiple;
    notes.push_back("i_hat at R=50000 vs exact: max |dev|/MC SE " + fmt("%.2f", worst));
  }
  return {pass, notes[0] + "; " + notes[1]};
}

Outcome criterion5(const Settings& s) {
  const Index datasets = s.smoke ? 2000 : 10000;
  const auto g = study(base_config("gaussian-4", 20, datasets, 2024), s);
  const auto b = study(base_config("binary-arm", 20, datasets, 2024), s);
  const double pg = lower5(g, Method::first_order);
  const double pb = lower5(b, Method::first_order);
  const bool pass = std::abs(pg - kTable1Gaussian) <= kTable1Tol &&
                    std::abs(pb - kTable1Binary) <= kTable1Tol;
  // Upper tails are context only; for gaussian-k they share the lower tail's distribution.
  return {pass, std::to_string(datasets) + " datasets each: gaussian-4 " + fmt("%.2f", pg) +
                    "% (target 9.7 +- 0.8; upper tail " +
                    fmt("%.2f", tail(g, Method::first_order, ">5%")) + "%), binary-arm " +
                    fmt("%.2f", pb) + "% (target 6.6 +- 0.8; upper tail " +
                    fmt("%.2f", tail(b, Method::first_order, ">5%")) + "%)"};
}

// Criteria 6 and 7 share one study.
struct TablesStudy {
  StudyResult result;
  bool done = false;
};

const StudyResult& tables_study(const Settings& s, TablesStudy& cache) {
  if (!cache.done) {
    StudyConfig c = base_config("gaussian-4", 20, s.smoke ? 500 : 2000, 2024);
    c.bootstrap_trials = 1000;
    c.covariance_trials = 1000;
    c.methods = {Method::first_order, Method::bootstrap, Method::rstar, Method::fixed_riskset};
    cache.result = study(c, s);
    cache.done = true;
  }
  return cache.result;
}

Outcome criterion6(const Settings& s, TablesStudy& cache) {
  const auto& r = tables_study(s, cache);
  const double boot = lower5(r, Method::bootstrap);
  const double rstar = lower5(r, Method::rstar);
  const bool pass = boot >= kBootLo && boot <= kBootHi && rstar >= kRstarLo && rstar <= kRstarHi;
  return {pass, std::to_string(r.records.size()) + " datasets (" +
                    std::to_string(r.excluded) + " excluded): bootstrap " + fmt("%.2f", boot) +
                    "% in [3.6, 6.6], r* " + fmt("%.2f", rstar) + "% in [3.4, 6.4]"};
}

Outcome criterion7(const Settings& s, TablesStudy& cache) {
  const auto& r = tables_study(s, cache);
  const double fixed = lower5(r, Method::fixed_riskset);
  const double first = lower5(r, Method::first_order);
  return {fixed >= kFixedRisksetMin, "fixed-risk-set r* " + fmt("%.2f", fixed) +
                                         "% (>= 7.5), first order " + fmt("%.2f", first) + "%"};
}

Outcome criterion8(const Settings& s) {
  bool pass = true;
  std::string detail;
  struct Case {
    const char* scenario;
    Index n;
    double lo, hi;
  };
  for (const Case& k : {Case{"gaussian-4", 20, kSlope4Lo, kSlope4Hi},
                        Case{"gaussian-9", 40, kSlope9Lo, kSlope9Hi}}) {
    StudyConfig c = base_config(k.scenario, k.n, 200, 8);
    c.protocol = HypothesisProtocol::wald_lower;
    c.covariance_trials = 2000;
    c.methods = {Method::first_order, Method::rstar};
    const auto r = study(c, s);
    const auto np_inf = r.np_inf.value_or(NpInfSummary{});
    const bool slope_ok = np_inf.slope >= k.lo && np_inf.slope <= k.hi;
    const bool ratio_ok = np_inf.mean_abs_np > kNpOverInf * np_inf.mean_abs_inf;
    pass = pass && r.np_inf.has_value() && slope_ok && ratio_ok;
    if (!detail.empty()) detail += "; ";
    detail += std::string(k.scenario) + "/n=" + std::to_string(k.n) + ": slope " +
              fmt("%.2f", np_inf.slope) + " in [" + fmt("%.1f", k.lo) + ", " +
              fmt("%.1f", k.hi) + "] " + (slope_ok ? "ok" : "MISS") + ", mean|NP|/mean|INF| " +
              fmt("%.2f", np_inf.mean_abs_np / np_inf.mean_abs_inf) + " " +
              (ratio_ok ? "ok" : "MISS") + " (" + std::to_string(np_inf.count) + " datasets)";
  }
  return {pass, detail};
}

Outcome criterion9(const Settings& s) {
  StudyConfig c = base_config("gaussian-4", 20, 500, 9);
  c.censoring = CensoringSource::reference;
  c.bootstrap_trials = 1000;
  c.covariance_trials = 1000;
  c.methods = {Method::first_order, Method::bootstrap, Method::rstar};
  const auto r = study(c, s);
  std::vector<double> boot, phi_r, phi_rstar;
  for (const auto& d : r.records) {
    if (d.excluded) continue;
    if (d.bootstrap.available) boot.push_back(d.bootstrap.p_lower);
    if (d.rstar.available && !d.rstar.fallback) {
      phi_r.push_back(d.first_order.p_lower);
      phi_rstar.push_back(d.rstar.p_lower);
    }
  }
  const double d_boot = oracle::ks_distance(boot);
  const double p_boot = oracle::ks_pvalue(d_boot, boot.size());
  const double d_r = oracle::ks_distance(phi_r);
  const double d_rstar = oracle::ks_distance(phi_rstar);
  const bool pass = p_boot > kKsLevel && d_rstar < d_r;
  return {pass, std::to_string(boot.size()) + " bootstrap p-values: KS p " +
                    fmt("%.3f", p_boot) + " (> 0.01); KS distance Phi(r*) " +
                    fmt("%.4f", d_rstar) + " vs Phi(r) " + fmt("%.4f", d_r)};
}

Outcome criterion10(const Settings& s) {
  const Index datasets = s.smoke ? 200 : 1000;
  const StudyConfig c = base_config("gaussian-4", 20, datasets, 10);
  const Scenario scenario = Scenario::parse(c.scenario);
  enum class State { excluded, covered, missed };
  std::vector<State> state(static_cast<std::size_t>(datasets));
  parallel_for(state.size(), s.threads, [&](std::size_t i) {
    const std::uint64_t ds = derive_seed(c.seed, i);
    RngStream rng(ds, 0);
    const auto rank = rank_reduce(scenario_generate(scenario, c.n, 0.0, rng));
    const auto& model = loglinear_model();
    const auto hat = fit_unconstrained(rank, model);
    if (hat.status != FitStatus::converged) {
      state[i] = State::excluded;
      return;
    }
    BootstrapOptions bo;
    bo.trials = 1000;
    bo.seed = derive_seed(ds, 2);
    // invert_ci's lower limit, computed alone.
    const auto direction = HypothesisSpec::coordinate(rank.dimension(), 0, 0.0);
    try {
      const auto lower = invert_bound(rank, model, direction, hat, BoundSide::lower, 0.05, bo);
      state[i] = lower.value <= 0.0 ? State::covered : State::missed;
    } catch (const NumericalError&) {
      state[i] = State::excluded;
    }
  });
  Index used = 0;
  Index covered = 0;
  for (const State st : state) {
    if (st == State::excluded) continue;
    ++used;
    if (st == State::covered) ++covered;
  }
  const double pct = 100.0 * covered / static_cast<double>(used);
  return {std::abs(pct - kCoverage) <= kCoverageTol,
          std::to_string(used) + " of " + std::to_string(datasets) +
              " datasets: 95% lower limit covers 0 in " + fmt("%.2f", pct) +
              "% (target 94.8 +- 1.5)"};
}

std::string run_cli(const std::vector<std::string>& args, int& code) {
  std::ostringstream out;
  std::ostringstream err;
  code = cli::run(args, out, err);
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion11(const Settings&) {
  const fs::path dir = fs::temp_directory_path() / "coxhoa-acceptance-repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RngStream rng(111, 0);
  const fs::path data = dir / "data.csv";
  {
    std::ofstream f(data);
    write_dataset(f, scenario_generate(Scenario::parse("gaussian-2"), 20, 0.0, rng));
  }
  const fs::path config = dir / "study.json";
  std::ofstream(config) << R"({"scenario": "gaussian-2", "n": 15, "datasets": 24, "B": 200,
    "R": 300, "seed": 4, "methods": ["first-order", "bootstrap", "rstar", "fixed-riskset"],
    "checkpoint_every": 7})";

  bool same = true;
  int failures = 0;
  const std::vector<std::vector<std::string>> commands = {
      {"test", "--data", data.string(), "--psi0", "0.4", "--method",
       "first-order,bootstrap,rstar,fixed-riskset", "--B", "500", "--R", "400", "--seed", "42"},
      {"ci", "--data", data.string(), "--psi", "2", "--B", "300", "--seed", "7"},
  };
  for (const auto& cmd : commands) {
    std::string first;
    for (const char* threads : {"1", "1", "2", "4"}) {
      auto args = cmd;
      args.insert(args.end(), {"--threads", threads});
      int code = 0;
      const std::string out = run_cli(args, code);
      if (code != 0) ++failures;
      if (first.empty()) first = out;
      same = same && out == first;
    }
  }
  std::map<std::string, std::string> reference;
  for (const char* threads : {"1", "1", "3"}) {
    const fs::path out = dir / (std::string("study-") + threads);
    fs::remove_all(out);
    int code = 0;
    const std::string summary = run_cli({"simstudy", "--config", config.string(), "--out",
                                         out.string(), "--threads", threads},
                                        code);
    if (code != 0) ++failures;
    for (const char* f : {"records.csv", "table.csv", "summary.json"}) {
      const std::string text = slurp(out / f);
      auto [it, inserted] = reference.emplace(f, text);
      same = same && (inserted || it->second == text);
    }
  }
  fs::remove_all(dir);
  return {same && failures == 0,
          std::string("test, ci and simstudy at 1/2/3/4 threads: outputs ") +
              (same ? "byte-identical" : "differ") +
              (failures ? ", " + std::to_string(failures) + " runs failed" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria", "coxhoa_acceptance"};
  Settings settings;
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
  app.add_flag("--smoke", settings.smoke, "Reduced dataset counts for criteria 5, 6/7 and 10");
  app.add_option("--threads", settings.threads, "Worker threads, 0 for all cores");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int k) { return wanted.empty() || wanted.count(k) > 0; };

  TablesStudy tables;
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, [&] { return criterion1(settings); }},
      {2, [&] { return criterion2(settings); }},
      {3, [&] { return criterion3(settings); }},
      {4, [&] { return criterion4(settings); }},
      {5, [&] { return criterion5(settings); }},
      {6, [&] { return criterion6(settings, tables); }},
      {7, [&] { return criterion7(settings, tables); }},
      {8, [&] { return criterion8(settings); }},
      {9, [&] { return criterion9(settings); }},
      {10, [&] { return criterion10(settings); }},
      {11, [&] { return criterion11(settings); }},
  };
  int failed = 0;
  for (const auto& [k, fn] : criteria) {
    if (!want(k)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %2d %s%s: %s\n", k, o.pass ? "PASS" : "FAIL",
                settings.smoke ? " (smoke)" : "", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
