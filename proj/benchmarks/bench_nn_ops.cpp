#include <benchmark/benchmark.h>

#include "versnet/nn_ops.hpp"

using namespace versnet;

namespace {

ConvParams conv3x3(std::size_t in_c, std::size_t out_c, Prng& rng) {
  ConvParams p;
  p.weights = tensor_randn({out_c, in_c, 3, 3}, 0.0f, 0.1f, rng);
  p.bias = Tensor({out_c}, 0.0f);
  p.pad = Padding::uniform(1);
  return p;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Prng rng(1);
  const Tensor x = tensor_randn({c, hw, hw}, 0.0f, 1.0f, rng);
  const ConvParams p = conv3x3(c, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 9 * hw * hw));
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 64})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMicrosecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Prng rng(2);
  const Tensor x = tensor_randn({c, hw, hw}, 0.0f, 1.0f, rng);
  const ConvParams p = conv3x3(c, c, rng);
  const Tensor d = tensor_randn({c, hw, hw}, 0.0f, 1.0f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, p, d));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 9 * hw * hw));
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 64})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMicrosecond);

void BM_Upsample16(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  Prng rng(3);
  ConvParams p;
  p.weights = bilinear_kernel(16, 12);
  p.stride = 16;
  p.pad = Padding::uniform(8);
  const Tensor x = tensor_randn({12, hw, hw}, 0.0f, 1.0f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(tconv2d_forward(x, p));
}
BENCHMARK(BM_Upsample16)->Arg(4)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_MaxPool(benchmark::State& state) {
  Prng rng(4);
  const Tensor x = tensor_randn({32, 64, 64}, 0.0f, 1.0f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(maxpool2x2_forward(x));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMicrosecond);

void BM_SoftmaxCrossEntropy(benchmark::State& state) {
  Prng rng(5);
  const Tensor logits = tensor_randn({12, 64, 64}, 0.0f, 1.0f, rng);
  LabelImage labels(64, 64);
  for (std::size_t i = 0; i < labels.classes().size(); ++i) labels[i] = static_cast<std::uint8_t>(1 + i % 12);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_cross_entropy(logits, labels));
}
BENCHMARK(BM_SoftmaxCrossEntropy)->Unit(benchmark::kMicrosecond);

}  // namespace
