#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "versnet/tensor.hpp"

namespace versnet {

inline constexpr int kBackgroundClass = 1;
inline constexpr int kFirstTargetClass = 2;
inline constexpr int kLastTargetClass = 11;
inline constexpr int kFrontClass = 12;
inline constexpr int kNumTargetClasses = 10;
inline constexpr int kDefaultNumClasses = 12;

inline bool is_target_class(int c) { return c >= kFirstTargetClass && c <= kLastTargetClass; }

/// H x W map of 1-based class indices (1 = background).
class LabelImage {
 public:
  LabelImage() = default;
  LabelImage(std::size_t height, std::size_t width, std::uint8_t fill = kBackgroundClass);
  LabelImage(std::size_t height, std::size_t width, std::vector<std::uint8_t> classes);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return classes_.size(); }

  std::uint8_t& at(std::size_t r, std::size_t c) { return classes_[r * width_ + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return classes_[r * width_ + c]; }
  std::uint8_t operator[](std::size_t i) const { return classes_[i]; }
  std::uint8_t& operator[](std::size_t i) { return classes_[i]; }

  const std::vector<std::uint8_t>& classes() const noexcept { return classes_; }

  /// Throws InvalidLabel unless every value is in {1..num_classes}.
  void validate(int num_classes) const;

  std::size_t count(int class_id) const;

  friend bool operator==(const LabelImage&, const LabelImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> classes_;
};

enum class ScoreKind { Logits, Probabilities };

/// Per-pixel class scores, num_classes x H x W. Channel k holds class k+1.
struct ScoreMap {
  Tensor values;
  ScoreKind kind = ScoreKind::Logits;

  std::size_t num_classes() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
};

/// Per-pixel argmax (1-based class ids); ties resolve to the lowest class.
LabelImage argmax_labels(const Tensor& scores);

}  // namespace versnet
