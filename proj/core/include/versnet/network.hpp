#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "versnet/maps.hpp"
#include "versnet/nn_ops.hpp"
#include "versnet/tensor.hpp"

namespace versnet {

struct VersNetConfig {
  int num_classes = kDefaultNumClasses;
  std::array<int, 4> block_channels{32, 64, 128, 256};
  int fc_channels = 512;
  float dropout_rate = 0.5f;
  int input_channels = 1;

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;

  friend bool operator==(const VersNetConfig&, const VersNetConfig&) = default;
};

inline constexpr std::size_t kDownsampleFactor = 16;
inline constexpr std::size_t kUpsampleKernel = 32;
inline constexpr std::size_t kUpsamplePad = 8;

enum class LayerKind { Conv, TransposedConv };

struct NamedLayer {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  ConvParams params;
};

/// All learnable tensors of the network, in a fixed order:
///   block1a block1b ... block4a block4b  (3x3, pad 1)
///   fc6      (6x6, pad 2 top/left and 3 bottom/right)
///   score    (1x1, num_classes outputs, no activation)
///   upsample (transposed 32x32, stride 16, pad 8, no bias)
struct NetworkParams {
  VersNetConfig config;
  std::vector<NamedLayer> layers;

  /// Parameter tensors in canonical order: each layer's weights, then its bias.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;

  const NamedLayer& layer(const std::string& name) const;
  NamedLayer& layer(const std::string& name);

  std::size_t parameter_count() const;

  friend bool operator==(const NetworkParams& a, const NetworkParams& b);
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const VersNetConfig& config);

/// Single-channel amplitude image, 1 x H x W, values in [0, 1].
class SarImage {
 public:
  SarImage() = default;
  explicit SarImage(Tensor pixels);
  SarImage(std::size_t height, std::size_t width, float value = 0.0f);

  const Tensor& pixels() const noexcept { return pixels_; }
  Tensor& pixels() noexcept { return pixels_; }
  std::size_t height() const { return pixels_.dim(1); }
  std::size_t width() const { return pixels_.dim(2); }
  float at(std::size_t r, std::size_t c) const { return pixels_.at(0, r, c); }
  float& at(std::size_t r, std::size_t c) { return pixels_.at(0, r, c); }

  friend bool operator==(const SarImage&, const SarImage&) = default;

 private:
  Tensor pixels_;
};

/// Gradients for every layer, aligned with NetworkParams::layers.
struct NetworkGrads {
  std::vector<GradPair> layers;

  std::vector<const Tensor*> tensors() const;
};

NetworkParams build(const VersNetConfig& config, Prng& rng);

/// Logits, num_classes x H x W, for an image of any size.
ScoreMap forward(const NetworkParams& params, const SarImage& image, Mode mode, Prng& rng);

struct ForwardBackwardResult {
  double loss = 0.0;
  NetworkGrads grads;
  ScoreMap logits;
};

ForwardBackwardResult forward_backward(const NetworkParams& params, const SarImage& image,
                                       const LabelImage& labels, Prng& rng);

/// Eval-mode softmax probabilities.
ScoreMap predict_probabilities(const NetworkParams& params, const SarImage& image);

/// Eval-mode per-pixel argmax, ties toward the lowest class id.
LabelImage predict(const NetworkParams& params, const SarImage& image);

// Checkpoints: "VNCK", u32 version, config, named VNT1 tensors, optional momentum.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkParams params;
  std::optional<MomentumState> momentum;
};

void save_checkpoint(const std::string& path, const NetworkParams& params,
                     const MomentumState* momentum = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace versnet
