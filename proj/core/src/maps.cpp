#include "versnet/maps.hpp"

#include <algorithm>
#include <string>

#include "versnet/errors.hpp"

namespace versnet {

LabelImage::LabelImage(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width), classes_(height * width, fill) {
  if (height == 0 || width == 0) throw InvalidArgument("label image must be at least 1x1");
}

LabelImage::LabelImage(std::size_t height, std::size_t width, std::vector<std::uint8_t> classes)
    : height_(height), width_(width), classes_(std::move(classes)) {
  if (height == 0 || width == 0) throw InvalidArgument("label image must be at least 1x1");
  if (classes_.size() != height * width) throw ShapeError("label data length != height * width");
}

void LabelImage::validate(int num_classes) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const int v = classes_[i];
    if (v < 1 || v > num_classes) {
      throw InvalidLabel("label " + std::to_string(v) + " at pixel (" + std::to_string(i / width_) +
                         "," + std::to_string(i % width_) + ") outside {1.." +
                         std::to_string(num_classes) + "}");
    }
  }
}

std::size_t LabelImage::count(int class_id) const {
  return static_cast<std::size_t>(
      std::count(classes_.begin(), classes_.end(), static_cast<std::uint8_t>(class_id)));
}

LabelImage argmax_labels(const Tensor& scores) {
  if (scores.rank() != 3) throw ShapeError("argmax_labels: expected num_classes x H x W scores");
  const std::size_t nc = scores.channels();
  if (nc > 255) throw InvalidArgument("argmax_labels: at most 255 classes supported");
  const std::size_t hw = scores.height() * scores.width();
  LabelImage out(scores.height(), scores.width());
  for (std::size_t i = 0; i < hw; ++i) {
    std::size_t best = 0;
    float best_v = scores[i];
    for (std::size_t k = 1; k < nc; ++k) {
      if (scores[k * hw + i] > best_v) {
        best_v = scores[k * hw + i];
        best = k;
      }
    }
    out[i] = static_cast<std::uint8_t>(best + 1);
  }
  return out;
}

}  // namespace versnet
