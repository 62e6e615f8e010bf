#include "mphase/estimator.hpp"
#include "mphase/limitlaw.hpp"
#include "mphase/rng.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace mphase;

namespace {

Dataset make_data(std::size_t n, int K) {
  Rng rng = make_rng(7);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::normal_distribution<double> ne(0.0, 0.3);
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = ux(rng);
    ys[i] = 2.0 * std::floor(xs[i] * (K + 1)) + ne(rng);
  }
  return Dataset(xs, ys);
}

void BM_FitConstantSquared(benchmark::State& state) {
  const Dataset d = make_data(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(fit(d, SegmentFamily::constant(), 2, LossSpec::squared()));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitConstantSquared)->RangeMultiplier(2)->Range(256, 4096)->Complexity();

void BM_FitLinearHuber(benchmark::State& state) {
  const Dataset d = make_data(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(fit(d, SegmentFamily::linear(), 1, LossSpec::huber()));
}
BENCHMARK(BM_FitLinearHuber)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_CostTable(benchmark::State& state) {
  const Dataset d = make_data(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_cost_table(d, SegmentFamily::linear(), LossSpec::squared(), FitOptions{}));
  }
}
BENCHMARK(BM_CostTable)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_DpPartition(benchmark::State& state) {
  const Dataset d = make_data(200, 3);
  const CostTable t = segment_cost_table(d, SegmentFamily::constant(), LossSpec::squared(), FitOptions{});
  for (auto _ : state) benchmark::DoNotOptimize(dp_partition(t, static_cast<int>(state.range(0)), 3));
}
BENCHMARK(BM_DpPartition)->Arg(1)->Arg(3);

void BM_LimitSampler(benchmark::State& state) {
  LimitLawSpec s;
  s.jump_d = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_limit_distribution(s, 1000, 1));
}
BENCHMARK(BM_LimitSampler)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
