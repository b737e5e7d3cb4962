#include <benchmark/benchmark.h>

#include "versnet/metrics.hpp"

using namespace versnet;

namespace {

void BM_PixelConfusion(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  LabelImage pred(n, n), truth(n, n);
  Prng rng(1);
  for (std::size_t i = 0; i < n * n; ++i) {
    pred[i] = static_cast<std::uint8_t>(1 + rng.below(12));
    truth[i] = static_cast<std::uint8_t>(1 + rng.below(12));
  }
  for (auto _ : state) {
    ConfusionMatrix cm(12);
    accumulate_pixel_confusion(pred, truth, cm);
    benchmark::DoNotOptimize(cm);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_PixelConfusion)->Arg(64)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_BuildReport(benchmark::State& state) {
  ConfusionMatrix cm(12);
  Prng rng(2);
  for (int p = 1; p <= 12; ++p) {
    for (int a = 1; a <= 12; ++a) cm.add(p, a, rng.below(100000));
  }
  for (auto _ : state) benchmark::DoNotOptimize(build_report(cm));
}
BENCHMARK(BM_BuildReport);

void BM_ChipClassify(benchmark::State& state) {
  Prng rng(3);
  Tensor probs({12, 64, 64}, 0.0f);
  for (auto& v : probs.data()) v = static_cast<float>(rng.uniform());
  for (auto _ : state) benchmark::DoNotOptimize(chip_classify(probs));
}
BENCHMARK(BM_ChipClassify)->Unit(benchmark::kMicrosecond);

}  // namespace
