#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "versnet/maps.hpp"
#include "versnet/network.hpp"

namespace versnet {

/// Writes a binary (P5) PGM. Amplitudes in [0, 1] map linearly onto
/// 0..255 (8-bit) or 0..65535 (16-bit, big-endian samples), rounding to
/// nearest.
void save_image(const SarImage& image, const std::string& path, int bits = 16);

/// Reads P5 or P2 PGM of any maxval; samples are scaled by 1/maxval.
SarImage load_image(const std::string& path);

/// Labels are stored as 8-bit PGM with pixel value = class id.
void save_label(const LabelImage& labels, const std::string& path);
LabelImage load_label(const std::string& path, int num_classes = kDefaultNumClasses);

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

void save_ppm(const RgbImage& image, const std::string& path);

/// Fixed ATR palette indexed by class id 1..12: background black, ten target
/// hues 36 degrees apart starting at red, front white.
const std::array<std::array<std::uint8_t, 3>, kDefaultNumClasses>& atr_palette();
RgbImage render_atr(const LabelImage& labels);
RgbImage load_ppm(const std::string& path);

// Parsers over in-memory bytes, used by the file loaders.
struct GrayRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint32_t maxval = 0;
  std::vector<std::uint16_t> samples;
};
GrayRaster parse_pgm(const std::vector<std::uint8_t>& bytes);
RgbImage parse_ppm(const std::vector<std::uint8_t>& bytes);

}  // namespace versnet
