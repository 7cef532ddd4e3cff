#include <benchmark/benchmark.h>

#include "vshift/dataset.hpp"
#include "vshift/vboost.hpp"
#include "vshift/vmatrix.hpp"
#include "vshift/vsvm.hpp"

using namespace vshift;

namespace {

void BM_VsvmFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto syn = gen_sigmoid_synthetic(n, 1000, 4);
  const auto v = empirical_v(syn.train.features, syn.target);
  for (auto _ : state) benchmark::DoNotOptimize(fit(syn.train, v, {}, 0.1).intercept);
}
BENCHMARK(BM_VsvmFit)->RangeMultiplier(2)->Range(50, 400)->Unit(benchmark::kMillisecond);

void BM_BoostFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto data = gen_twonorm(n + 500, 5);
  LabeledDataset train{data.features.topRows(static_cast<Eigen::Index>(n)),
                       {data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(n)}};
  TargetSample t{data.features.bottomRows(500)};
  const auto v = empirical_v_additive(train.features, t);
  for (auto _ : state) benchmark::DoNotOptimize(fit_boost(train, v, {}).base_score);
}
BENCHMARK(BM_BoostFit)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace
