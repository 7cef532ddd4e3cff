#include <benchmark/benchmark.h>

#include "vshift/dataset.hpp"
#include "vshift/vmatrix.hpp"

using namespace vshift;

namespace {

void BM_EmpiricalMultiplicative(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto data = gen_twonorm(n + 1000, 1);
  Matrix x = data.features.topRows(static_cast<Eigen::Index>(n));
  TargetSample t{data.features.bottomRows(1000)};
  for (auto _ : state) benchmark::DoNotOptimize(empirical_v(x, t).entries.data());
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EmpiricalMultiplicative)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_EmpiricalAdditive(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto data = gen_twonorm(n + 1000, 2);
  Matrix x = data.features.topRows(static_cast<Eigen::Index>(n));
  TargetSample t{data.features.bottomRows(1000)};
  for (auto _ : state) benchmark::DoNotOptimize(empirical_v_additive(x, t).entries.data());
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EmpiricalAdditive)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_AnalyticUniform(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto data = normalize_unit_cube(gen_twonorm(n, 3));
  for (auto _ : state)
    benchmark::DoNotOptimize(analytic_v_uniform(data.features, std::vector<double>(20, 1.0)).entries.data());
}
BENCHMARK(BM_AnalyticUniform)->Arg(128)->Arg(512);

}  // namespace
