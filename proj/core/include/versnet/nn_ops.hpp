#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "versnet/maps.hpp"
#include "versnet/tensor.hpp"

namespace versnet {

enum class Mode { Train, Eval };

/// Convolution parameters.
///
/// For conv2d the weights are outC x inC x kH x kW. For the transposed
/// convolution they are inC x outC x kH x kW, i.e. the same buffer a conv2d
/// mapping outC -> inC would use; tconv2d is that conv's input gradient.
struct ConvParams {
  Tensor weights;
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  Padding pad;
};

struct GradPair {
  Tensor d_weights;
  std::optional<Tensor> d_bias;
  Tensor d_input;  // left empty when the caller does not request it
};

Tensor conv2d_forward(const Tensor& x, const ConvParams& p);
GradPair conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& d_out,
                         bool need_input_grad = true);

Tensor tconv2d_forward(const Tensor& x, const ConvParams& p);
GradPair tconv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& d_out,
                          bool need_input_grad = true);

/// Upsampling kernel for a factor-f transposed convolution; channels x channels
/// x 2f x 2f with bilinear weights on the channel diagonal.
Tensor bilinear_kernel(std::size_t factor, std::size_t channels);

struct PoolIndices {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

struct PoolResult {
  Tensor output;
  PoolIndices indices;
};

/// 2x2 stride-2 max pooling; odd borders use truncated windows.
PoolResult maxpool2x2_forward(const Tensor& x);
Tensor maxpool2x2_backward(const PoolIndices& indices, const Tensor& d_out);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& d_out);

struct DropoutResult {
  Tensor output;
  Tensor mask;  // 1 keep, 0 drop
};

DropoutResult dropout_forward(const Tensor& x, float rate, Mode mode, Prng& rng);
Tensor dropout_backward(const Tensor& mask, float rate, const Tensor& d_out);

ScoreMap softmax_pixelwise(const Tensor& scores);

struct LossResult {
  double loss = 0.0;
  Tensor d_scores;  // gradient w.r.t. the pre-softmax logits
};

/// Mean per-pixel cross entropy of probabilities against 1-based labels.
LossResult cross_entropy_loss(const ScoreMap& probabilities, const LabelImage& labels);

/// Numerically stable fusion of softmax_pixelwise and cross_entropy_loss.
LossResult softmax_cross_entropy(const Tensor& logits, const LabelImage& labels);

struct MomentumState {
  std::vector<Tensor> velocity;

  static MomentumState zeros_like(std::span<const Tensor* const> params);
};

/// Heavy-ball update: v <- mu * v + g; theta <- theta - lr * v.
void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                       MomentumState& state, float lr, float mu);

}  // namespace versnet
