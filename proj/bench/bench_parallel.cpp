// Serial reference paths against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "rbmsem/datagen.hpp"
#include "rbmsem/estimators.hpp"
#include "rbmsem/simstudy.hpp"

namespace {

using namespace rbmsem;

Parallelism mode(const benchmark::State& state) { return state.range(0) ? Parallelism::OpenMP : Parallelism::Serial; }

void BM_RunCell(benchmark::State& state) {
  SimSetting s;
  s.model = "gcm";
  s.n = 20;
  s.reliability = presets::Reliability::Low;
  s.replications = 16;
  s.estimators = {Estimator::ML, Estimator::ERBM};
  s.parallelism = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(run_cell_raw(s));
}
BENCHMARK(BM_RunCell)->Arg(0)->Arg(1)->ArgNames({"openmp"})->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  const ModelSpec spec = presets::two_factor();
  const Dataset data = simulate(spec, presets::two_factor_truth(presets::Reliability::High), 100,
                                DistributionSpec::normal(), 7);
  const BoundsPolicy bounds = default_bounds(spec, summarize(data));
  ResampleOptions opt;
  opt.replicates = 50;
  opt.parallelism = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_correct(spec, data, bounds, opt));
}
BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->ArgNames({"openmp"})->Unit(benchmark::kMillisecond);

void BM_Jackknife(benchmark::State& state) {
  const ModelSpec spec = presets::gcm();
  const Dataset data = simulate(spec, presets::gcm_truth(presets::Reliability::Low), 40, DistributionSpec::normal(), 3);
  const BoundsPolicy bounds = default_bounds(spec, summarize(data));
  ResampleOptions opt;
  opt.parallelism = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(jackknife_correct(spec, data, bounds, opt));
}
BENCHMARK(BM_Jackknife)->Arg(0)->Arg(1)->ArgNames({"openmp"})->Unit(benchmark::kMillisecond);

void BM_ObservationScores(benchmark::State& state) {
  const ModelSpec spec = presets::two_factor();
  const Vector truth = presets::two_factor_truth(presets::Reliability::High);
  const Dataset data = simulate(spec, truth, static_cast<int>(state.range(0)), DistributionSpec::normal(), 11);
  for (auto _ : state) benchmark::DoNotOptimize(observation_scores(spec, truth, data));
}
BENCHMARK(BM_ObservationScores)->Arg(100)->Arg(10000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
