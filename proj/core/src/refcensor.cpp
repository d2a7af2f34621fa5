#include "coxhoa/refcensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/tools/roots.hpp>

#include "coxhoa/error.hpp"

namespace coxhoa {

ReferenceCensoringPlan::ReferenceCensoringPlan(std::vector<StratumPlan> strata)
    : strata_(std::move(strata)) {
  if (strata_.empty()) throw ValidationError("censoring plan has no strata");
  for (const auto& s : strata_) {
    if (s.censoring.size() < 2) {
      throw ValidationError("censoring plan for stratum " + std::to_string(s.label) +
                            " has no failures");
    }
    const Index m = static_cast<Index>(s.censoring.size()) - 1;
    Index total = m;
    for (const auto c : s.censoring) {
      if (c < 0) throw ValidationError("censoring counts must be non-negative");
      total += c;
    }
    if (total != static_cast<Index>(s.subjects.size())) {
      throw ValidationError("censoring plan for stratum " + std::to_string(s.label) +
                            " accounts for " + std::to_string(total) + " subjects, stratum has " +
                            std::to_string(s.subjects.size()));
    }
  }
}

ReferenceCensoringPlan ReferenceCensoringPlan::from_ranks(const RankData& rank) {
  std::vector<StratumPlan> plans;
  for (const auto& s : rank.strata()) {
    StratumPlan plan;
    plan.label = s.label;
    plan.subjects = s.sequence;
    std::sort(plan.subjects.begin(), plan.subjects.end());
    plan.censoring = s.censoring;
    plans.push_back(std::move(plan));
  }
  return ReferenceCensoringPlan(std::move(plans));
}

namespace {

std::vector<Index> order_by_times(std::span<const Index> subjects,
                                  const std::vector<double>& rates, RngStream& rng) {
  const auto n = subjects.size();
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = rng.exponential(rates[subjects[i]]);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return times[a] < times[b] || (times[a] == times[b] && a < b);
  });
  std::vector<Index> ordering(n);
  for (std::size_t i = 0; i < n; ++i) ordering[i] = subjects[idx[i]];
  return ordering;
}

std::vector<double> compute_rates(const Matrix& covariates_by_subject,
                                  const RelativeRiskModel& model, const Vector& theta) {
  const Index n = covariates_by_subject.cols();
  std::vector<double> rates(n);
  for (Index i = 0; i < n; ++i) {
    const double lr = model.log_risk(covariates_by_subject.col(i), theta);
    rates[i] = std::exp(lr);
    if (!(rates[i] > 0.0) || !std::isfinite(rates[i])) {
      throw NumericalError("relative risk of subject " + std::to_string(i + 1) +
                           " is not positive and finite");
    }
  }
  return rates;
}

}  // namespace

std::vector<Index> generate_uncensored_ranks(const Vector& theta,
                                             const Matrix& covariates_by_subject,
                                             std::span<const Index> subjects,
                                             const RelativeRiskModel& model, RngStream& rng) {
  if (!theta.allFinite()) throw NumericalError("generating parameter is not finite");
  return order_by_times(subjects, compute_rates(covariates_by_subject, model, theta), rng);
}

StratumRanks apply_progressive_type2(std::span<const Index> ordering,
                                     std::span<const Index> censoring, RngStream& rng,
                                     int label) {
  const auto n = static_cast<Index>(ordering.size());
  if (censoring.empty()) throw ValidationError("censoring configuration is empty");
  const Index m = static_cast<Index>(censoring.size()) - 1;

  // Alive positions in `ordering`; `slot` locates each in `pool`.
  std::vector<Index> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<Index> slot(pool);
  std::vector<char> removed(n, 0);
  Index next = 0;

  StratumRanks out;
  out.label = label;
  out.sequence.reserve(n);
  out.failure_pos.reserve(m);
  out.riskset_start.reserve(m);
  out.censoring.assign(censoring.begin(), censoring.end());

  auto remove = [&](Index pos) {
    const Index s = slot[pos];
    const Index last = pool.back();
    pool[s] = last;
    slot[last] = s;
    pool.pop_back();
    removed[pos] = 1;
  };
  auto censor = [&](Index count, Index stage) {
    if (count < 0 || count > static_cast<Index>(pool.size())) {
      throw ValidationError("cannot censor " + std::to_string(count) + " subjects at stage " +
                            std::to_string(stage) + " from a risk set of " +
                            std::to_string(pool.size()));
    }
    const auto begin = out.sequence.size();
    for (Index c = 0; c < count; ++c) {
      const Index pos = pool[rng.uniform_index(static_cast<Index>(pool.size()))];
      out.sequence.push_back(ordering[pos]);
      remove(pos);
    }
    std::sort(out.sequence.begin() + static_cast<std::ptrdiff_t>(begin), out.sequence.end());
  };

  censor(censoring[0], 0);
  for (Index i = 1; i <= m; ++i) {
    if (pool.empty()) {
      throw ValidationError("risk set is empty before failure " + std::to_string(i));
    }
    while (removed[next]) ++next;
    const auto pos = static_cast<Index>(out.sequence.size());
    out.failure_pos.push_back(pos);
    out.riskset_start.push_back(pos);
    out.sequence.push_back(ordering[next]);
    remove(next);
    censor(censoring[i], i);
  }
  if (!pool.empty()) {
    throw ValidationError("censoring configuration leaves " + std::to_string(pool.size()) +
                          " subjects unaccounted for");
  }
  return out;
}

ReferenceTrialGenerator::ReferenceTrialGenerator(
    std::shared_ptr<const Matrix> covariates_by_subject, ReferenceCensoringPlan plan,
    const RelativeRiskModel& model, const Vector& theta)
    : covariates_(std::move(covariates_by_subject)), plan_(std::move(plan)) {
  if (!theta.allFinite()) throw NumericalError("generating parameter is not finite");
  rates_ = compute_rates(*covariates_, model, theta);
}

ReferenceTrialGenerator::ReferenceTrialGenerator(const RankData& analysis,
                                                 const RelativeRiskModel& model,
                                                 const Vector& theta)
    : ReferenceTrialGenerator(analysis.shared_covariates(),
                              ReferenceCensoringPlan::from_ranks(analysis), model, theta) {}

RankData ReferenceTrialGenerator::generate(RngStream& rng) const {
  std::vector<StratumRanks> strata;
  strata.reserve(plan_.strata().size());
  for (const auto& s : plan_.strata()) {
    const auto ordering = order_by_times(s.subjects, rates_, rng);
    strata.push_back(apply_progressive_type2(ordering, s.censoring, rng, s.label));
  }
  return RankData(covariates_, std::move(strata));
}

RankData simulate_reference_trial(const Vector& theta,
                                  std::shared_ptr<const Matrix> covariates_by_subject,
                                  const RelativeRiskModel& model,
                                  const ReferenceCensoringPlan& plan, RngStream& rng) {
  return ReferenceTrialGenerator(std::move(covariates_by_subject), plan, model, theta)
      .generate(rng);
}

Scenario Scenario::parse(std::string_view id) {
  auto suffix_count = [&](std::string_view prefix, int fallback) {
    if (id.size() == prefix.size()) return fallback;
    if (id.size() < prefix.size() + 2 || id[prefix.size()] != '-') {
      throw ValidationError("unknown scenario '" + std::string(id) + "'");
    }
    int k = 0;
    const auto rest = id.substr(prefix.size() + 1);
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
    if (ec != std::errc() || ptr != rest.data() + rest.size() || k < 0) {
      throw ValidationError("unknown scenario '" + std::string(id) + "'");
    }
    return k;
  };
  Scenario s;
  if (id == "binary-arm") {
    s.kind = ScenarioKind::binary_arm;
    s.nuisance = 0;
  } else if (id.starts_with("gaussian")) {
    s.kind = ScenarioKind::gaussian;
    s.nuisance = suffix_count("gaussian", 4);
  } else if (id.starts_with("clinical-trial")) {
    s.kind = ScenarioKind::clinical_trial;
    s.nuisance = suffix_count("clinical-trial", 4);
  } else {
    throw ValidationError("unknown scenario '" + std::string(id) + "'");
  }
  return s;
}

std::string Scenario::id() const {
  switch (kind) {
    case ScenarioKind::binary_arm: return "binary-arm";
    case ScenarioKind::gaussian: return "gaussian-" + std::to_string(nuisance);
    case ScenarioKind::clinical_trial: return "clinical-trial-" + std::to_string(nuisance);
  }
  return "unknown";
}

double clinical_trial_hazard(double censoring_fraction) {
  if (!(censoring_fraction > 0.0 && censoring_fraction < 1.0)) {
    throw ValidationError("censoring fraction must lie in (0, 1)");
  }
  // P(T > 7 - E), E ~ Uniform[0, 2]: (exp(-5 h) - exp(-7 h)) / (2 h).
  auto excess = [&](double h) {
    return (std::exp(-5.0 * h) - std::exp(-7.0 * h)) / (2.0 * h) - censoring_fraction;
  };
  std::uintmax_t iterations = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(
      excess, 1e-8, 50.0, boost::math::tools::eps_tolerance<double>(52), iterations);
  return 0.5 * (lo + hi);
}

SurvivalSample scenario_generate(const Scenario& scenario, Index n, double psi_true,
                                 RngStream& rng) {
  if (n < 2) throw ValidationError("scenario sample size must be at least 2");
  if (!std::isfinite(psi_true)) throw ValidationError("true psi must be finite");
  const Index p = scenario.dimension();
  SurvivalSample sample;
  sample.time.resize(n);
  sample.status.resize(n);
  sample.covariates.resize(n, p);

  switch (scenario.kind) {
    case ScenarioKind::binary_arm: {
      sample.covariate_names = {"arm"};
      // Subjects [0, n/4) form the smaller arm (z = 0), the rest have z = 1.
      const Index exposed = n / 4;
      const Index censorable = n / 2;
      for (Index i = 0; i < n; ++i) {
        const double z = i < exposed ? 0.0 : 1.0;
        sample.covariates(i, 0) = z;
        const double t = rng.exponential(std::exp(psi_true * z));
        double c = std::numeric_limits<double>::infinity();
        if (i >= exposed && i < exposed + censorable) c = rng.uniform(0.0, 4.0);
        sample.time[i] = std::min(t, c);
        sample.status[i] = t <= c ? 1 : 0;
      }
      break;
    }
    case ScenarioKind::gaussian:
    case ScenarioKind::clinical_trial: {
      for (Index k = 0; k < p; ++k) sample.covariate_names.push_back("z" + std::to_string(k + 1));
      const bool trial = scenario.kind == ScenarioKind::clinical_trial;
      static const double trial_hazard = clinical_trial_hazard(0.3);
      const double hazard = trial ? trial_hazard : 1.0;
      for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < p; ++k) sample.covariates(i, k) = rng.normal();
        const double t = rng.exponential(hazard * std::exp(psi_true * sample.covariates(i, 0)));
        const double c = trial ? 7.0 - rng.uniform(0.0, 2.0) : rng.uniform(0.0, 3.25);
        sample.time[i] = std::min(t, c);
        sample.status[i] = t <= c ? 1 : 0;
      }
      break;
    }
  }
  return sample;
}

}  // namespace coxhoa
