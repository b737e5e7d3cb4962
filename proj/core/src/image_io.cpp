#include "versnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "versnet/errors.hpp"

namespace versnet {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& header, const std::vector<std::uint8_t>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("failed writing " + path);
}

// Netpbm header tokenizer: whitespace and '#' comments between fields.
class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::string magic() {
    if (bytes_.size() < 2) throw ParseError("truncated netpbm magic", pos_);
    std::string m{static_cast<char>(bytes_[0]), static_cast<char>(bytes_[1])};
    pos_ = 2;
    return m;
  }

  std::uint32_t number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw ParseError(std::string("truncated header before ") + field, pos_);
    if (!std::isdigit(bytes_[pos_])) {
      throw ParseError(std::string("expected digits for ") + field, pos_);
    }
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 0xFFFFFFFFull) throw ParseError(std::string(field) + " overflows", pos_);
      ++pos_;
    }
    return static_cast<std::uint32_t>(v);
  }

  // Exactly one whitespace byte separates the header from binary data.
  std::size_t end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ParseError("missing whitespace after header", pos_);
    }
    return pos_ + 1;
  }

  std::size_t pos() const { return pos_; }
  void set_pos(std::size_t p) { pos_ = p; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::uint16_t quantize(float v, std::uint32_t maxval) {
  const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(clamped * maxval));
}

}  // namespace

GrayRaster parse_pgm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader hdr(bytes);
  const std::string magic = hdr.magic();
  if (magic != "P5" && magic != "P2") throw ParseError("not a PGM (magic " + magic + ")", 0);
  GrayRaster r;
  r.width = hdr.number("width");
  r.height = hdr.number("height");
  r.maxval = hdr.number("maxval");
  if (r.width == 0 || r.height == 0) throw ParseError("PGM has zero dimension", hdr.pos());
  if (r.maxval == 0 || r.maxval > 65535) throw ParseError("PGM maxval out of range", hdr.pos());
  const std::size_t n = r.width * r.height;
  r.samples.resize(n);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t v = hdr.number("sample");
      if (v > r.maxval) throw ParseError("sample exceeds maxval", hdr.pos());
      r.samples[i] = static_cast<std::uint16_t>(v);
    }
    return r;
  }
  const std::size_t start = hdr.end_of_header();
  const std::size_t bps = r.maxval < 256 ? 1 : 2;
  if (bytes.size() < start + n * bps) {
    throw ParseError("truncated PGM raster: need " + std::to_string(n * bps) + " bytes", bytes.size());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = start + i * bps;
    const std::uint16_t v = bps == 1 ? bytes[at] : static_cast<std::uint16_t>((bytes[at] << 8) | bytes[at + 1]);
    if (v > r.maxval) throw ParseError("sample exceeds maxval", at);
    r.samples[i] = v;
  }
  return r;
}

RgbImage parse_ppm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader hdr(bytes);
  const std::string magic = hdr.magic();
  if (magic != "P6") throw ParseError("not a binary PPM (magic " + magic + ")", 0);
  RgbImage img;
  img.width = hdr.number("width");
  img.height = hdr.number("height");
  const std::uint32_t maxval = hdr.number("maxval");
  if (img.width == 0 || img.height == 0) throw ParseError("PPM has zero dimension", hdr.pos());
  if (maxval != 255) throw ParseError("only 8-bit PPM supported", hdr.pos());
  const std::size_t start = hdr.end_of_header();
  const std::size_t n = img.width * img.height * 3;
  if (bytes.size() < start + n) throw ParseError("truncated PPM raster", bytes.size());
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                 bytes.begin() + static_cast<std::ptrdiff_t>(start + n));
  return img;
}

void save_image(const SarImage& image, const std::string& path, int bits) {
  if (bits != 8 && bits != 16) throw InvalidArgument("PGM bit depth must be 8 or 16");
  if (image.pixels().channels() != 1) throw ShapeError("save_image expects a single-channel image");
  const std::uint32_t maxval = bits == 8 ? 255 : 65535;
  const std::size_t h = image.height(), w = image.width();
  std::vector<std::uint8_t> body;
  body.reserve(h * w * (bits / 8));
  for (float v : image.pixels().data()) {
    const std::uint16_t q = quantize(v, maxval);
    if (bits == 16) body.push_back(static_cast<std::uint8_t>(q >> 8));
    body.push_back(static_cast<std::uint8_t>(q & 0xFF));
  }
  write_file(path, "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n",
             body);
}

SarImage load_image(const std::string& path) {
  GrayRaster r;
  try {
    r = parse_pgm(read_file(path));
  } catch (const ParseError& e) {
    throw e.in_context(path);
  }
  Tensor t({1, r.height, r.width}, 0.0f);
  const float inv = 1.0f / static_cast<float>(r.maxval);
  for (std::size_t i = 0; i < r.samples.size(); ++i) t[i] = static_cast<float>(r.samples[i]) * inv;
  return SarImage(std::move(t));
}

void save_label(const LabelImage& labels, const std::string& path) {
  write_file(path,
             "P5\n" + std::to_string(labels.width()) + " " + std::to_string(labels.height()) + "\n255\n",
             labels.classes());
}

LabelImage load_label(const std::string& path, int num_classes) {
  GrayRaster r;
  try {
    r = parse_pgm(read_file(path));
  } catch (const ParseError& e) {
    throw e.in_context(path);
  }
  if (r.maxval > 255) throw InvalidLabel(path + ": label image must be 8-bit");
  std::vector<std::uint8_t> classes(r.samples.begin(), r.samples.end());
  LabelImage labels(r.height, r.width, std::move(classes));
  try {
    labels.validate(num_classes);
  } catch (const InvalidLabel& e) {
    throw InvalidLabel(path + ": " + e.what());
  }
  return labels;
}

void save_ppm(const RgbImage& image, const std::string& path) {
  if (image.rgb.size() != image.height * image.width * 3) throw ShapeError("RGB buffer size mismatch");
  write_file(path,
             "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n",
             image.rgb);
}

RgbImage load_ppm(const std::string& path) {
  try {
    return parse_ppm(read_file(path));
  } catch (const ParseError& e) {
    throw e.in_context(path);
  }
}

const std::array<std::array<std::uint8_t, 3>, kDefaultNumClasses>& atr_palette() {
  static const std::array<std::array<std::uint8_t, 3>, kDefaultNumClasses> palette{{
      {0, 0, 0},        // background
      {255, 0, 0},      // 2
      {255, 153, 0},    // 3
      {204, 255, 0},    // 4
      {51, 255, 0},     // 5
      {0, 255, 102},    // 6
      {0, 255, 255},    // 7
      {0, 102, 255},    // 8
      {51, 0, 255},     // 9
      {204, 0, 255},    // 10
      {255, 0, 153},    // 11
      {255, 255, 255},  // front
  }};
  return palette;
}

RgbImage render_atr(const LabelImage& labels) {
  labels.validate(kDefaultNumClasses);
  RgbImage out{labels.height(), labels.width(), {}};
  out.rgb.reserve(labels.classes().size() * 3);
  for (const std::uint8_t c : labels.classes()) {
    const auto& rgb = atr_palette()[c - 1u];
    out.rgb.insert(out.rgb.end(), rgb.begin(), rgb.end());
  }
  return out;
}

}  // namespace versnet
