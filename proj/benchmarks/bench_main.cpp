#include <benchmark/benchmark.h>

#include "coxhoa/bootstrap.hpp"
#include "coxhoa/hoa.hpp"
#include "coxhoa/refcensor.hpp"
#include "coxhoa/rng.hpp"

using namespace coxhoa;

namespace {

RankData data(Index n, const char* scenario = "gaussian-4") {
  RngStream rng(5, 0);
  return rank_reduce(scenario_generate(Scenario::parse(scenario), n, 0.0, rng));
}

void BM_Likelihood(benchmark::State& state) {
  const auto rank = data(state.range(0));
  const Vector theta = Vector::Constant(rank.dimension(), 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        evaluate_likelihood(rank, loglinear_model(), theta, LikelihoodOrder::information));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Likelihood)->RangeMultiplier(4)->Range(20, 1280)->Complexity();

void BM_Fit(benchmark::State& state) {
  const auto rank = data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_unconstrained(rank, loglinear_model()));
}
BENCHMARK(BM_Fit)->Arg(20)->Arg(40)->Arg(200);

void BM_TrialGeneration(benchmark::State& state) {
  const auto rank = data(state.range(0));
  const ReferenceTrialGenerator gen(rank, loglinear_model(), Vector::Zero(rank.dimension()));
  std::uint64_t b = 0;
  for (auto _ : state) {
    RngStream rng(7, b++);
    benchmark::DoNotOptimize(gen.generate(rng));
  }
}
BENCHMARK(BM_TrialGeneration)->Arg(20)->Arg(40)->Arg(200);

void BM_Bootstrap(benchmark::State& state) {
  const auto rank = data(20);
  const auto spec = HypothesisSpec::coordinate(rank.dimension(), 0, 0.0);
  BootstrapOptions o;
  o.trials = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_pvalue(rank, loglinear_model(), spec, o));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bootstrap)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Covariances(benchmark::State& state) {
  const auto rank = data(20);
  const auto spec = HypothesisSpec::coordinate(rank.dimension(), 0, 0.0);
  const auto hat = fit_unconstrained(rank, loglinear_model());
  const auto psi = fit_constrained(rank, loglinear_model(), spec);
  CovarianceOptions o;
  o.trials = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        estimate_covariances(rank, loglinear_model(), hat.theta, psi.theta, o));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Covariances)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
