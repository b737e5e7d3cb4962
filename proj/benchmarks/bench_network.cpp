#include <benchmark/benchmark.h>

#include "versnet/network.hpp"
#include "versnet/synthdata.hpp"

using namespace versnet;

namespace {

VersNetConfig config_for(int wide) {
  VersNetConfig c;
  if (!wide) {
    c.block_channels = {16, 32, 64, 64};
    c.fc_channels = 128;
  }
  return c;
}

void BM_ForwardBackward64(benchmark::State& state) {
  Prng rng(1);
  const NetworkParams net = build(config_for(static_cast<int>(state.range(0))), rng);
  const Chip chip = gen_chip(TargetSpec{}, 64, 7);
  for (auto _ : state) benchmark::DoNotOptimize(forward_backward(net, chip.image, chip.label, rng));
}
BENCHMARK(BM_ForwardBackward64)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  Prng rng(2);
  const NetworkParams net = build(config_for(0), rng);
  const auto n = static_cast<std::size_t>(state.range(0));
  const SarImage image(n, n, 0.1f);
  for (auto _ : state) benchmark::DoNotOptimize(predict(net, image));
}
BENCHMARK(BM_Predict)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_GenChip(benchmark::State& state) {
  std::uint64_t seed = 0;
  TargetSpec spec;
  for (auto _ : state) {
    spec.class_id = 2 + static_cast<int>(seed % 10);
    spec.pose_deg = static_cast<double>(seed * 37 % 360);
    benchmark::DoNotOptimize(gen_chip(spec, 64, seed++));
  }
}
BENCHMARK(BM_GenChip)->Unit(benchmark::kMicrosecond);

}  // namespace
