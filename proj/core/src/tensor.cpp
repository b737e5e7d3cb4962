#include "versnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "versnet/errors.hpp"

namespace versnet {

namespace {

constexpr char kTensorMagic[4] = {'V', 'N', 'T', '1'};

void check_shape(const Shape& shape) {
  if (shape.empty()) throw InvalidArgument("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw InvalidArgument("tensor dimension must be >= 1, got " + shape_string(shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank3(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected rank-3 C x H x W tensor, got " +
                     shape_string(t.shape()));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Prng

Prng::Prng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

std::uint64_t Prng::next_u64() { return engine_(); }

double Prng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Prng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Prng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double Prng::exponential() { return -std::log1p(-uniform()); }

bool Prng::bernoulli(double p) { return uniform() < p; }

std::uint64_t Prng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("Prng::below: n must be positive");
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % n;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, float value) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), value);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape_.size()) throw OutOfRange("tensor dim index out of range");
  return shape_[i];
}

float& Tensor::at(std::size_t c, std::size_t h, std::size_t w) {
  return data_[(c * shape_[1] + h) * shape_[2] + w];
}

float Tensor::at(std::size_t c, std::size_t h, std::size_t w) const {
  return data_[(c * shape_[1] + h) * shape_[2] + w];
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(float scale) {
  for (auto& v : data_) v *= scale;
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float Tensor::max_abs() const {
  float m = 0.0f;
  for (float v : data_) m = std::max(m, std::fabs(v));
  return m;
}

double Tensor::sum() const {
  double s = 0.0;
  for (float v : data_) s += v;
  return s;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, float s) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

Tensor tensor_fill(const Shape& shape, float value) {
  if (!std::isfinite(value)) throw InvalidArgument("tensor_fill: value must be finite");
  return Tensor(shape, value);
}

Tensor tensor_randn(const Shape& shape, float mean, float stddev, Prng& rng) {
  if (!(stddev >= 0.0f)) throw InvalidArgument("tensor_randn: stddev must be >= 0");
  if (!std::isfinite(mean) || !std::isfinite(stddev)) {
    throw InvalidArgument("tensor_randn: mean and stddev must be finite");
  }
  Tensor t(shape, mean);
  if (stddev == 0.0f) return t;
  for (auto& v : t.data()) {
    v = static_cast<float>(mean + static_cast<double>(stddev) * rng.normal());
  }
  return t;
}

Tensor pad2d(const Tensor& t, const Padding& pad, float value) {
  require_rank3(t, "pad2d");
  const std::size_t c = t.channels(), h = t.height(), w = t.width();
  const std::size_t oh = h + pad.top + pad.bottom;
  const std::size_t ow = w + pad.left + pad.right;
  Tensor out({c, oh, ow}, value);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      const float* src = t.raw() + (ch * h + i) * w;
      float* dst = out.raw() + (ch * oh + i + pad.top) * ow + pad.left;
      std::copy(src, src + w, dst);
    }
  }
  return out;
}

Tensor crop2d(const Tensor& t, std::size_t top, std::size_t left, std::size_t out_h,
              std::size_t out_w) {
  require_rank3(t, "crop2d");
  if (out_h == 0 || out_w == 0) throw OutOfRange("crop2d: empty crop window");
  if (top + out_h > t.height() || left + out_w > t.width()) {
    throw OutOfRange("crop2d: window " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " at (" + std::to_string(top) + "," + std::to_string(left) +
                     ") exceeds tensor " + shape_string(t.shape()));
  }
  const std::size_t c = t.channels(), h = t.height(), w = t.width();
  Tensor out({c, out_h, out_w}, 0.0f);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const float* src = t.raw() + (ch * h + top + i) * w + left;
      std::copy(src, src + out_w, out.raw() + (ch * out_h + i) * out_w);
    }
  }
  return out;
}

// ---------------------------------------------------------------- serialization

namespace detail {

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw ParseError("unexpected end of stream", static_cast<std::size_t>(std::max<std::streamoff>(0, in.gcount())));
  }
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

}  // namespace detail

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kTensorMagic, 4);
  detail::write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) detail::write_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) detail::write_f32(out, v);
  if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  const auto start = in.tellg();
  const auto offset = [&]() -> std::size_t {
    const auto pos = in.tellg();
    return (pos < 0 || start < 0) ? 0 : static_cast<std::size_t>(pos - start);
  };
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw ParseError("bad tensor magic, expected VNT1", 0);
  }
  const std::uint32_t rank = detail::read_u32(in);
  if (rank == 0 || rank > 8) throw ParseError("bad tensor rank " + std::to_string(rank), offset());
  Shape shape(rank);
  for (auto& d : shape) {
    d = detail::read_u32(in);
    if (d == 0) throw ParseError("zero tensor dimension", offset());
  }
  std::vector<float> data(shape_size(shape));
  for (auto& v : data) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
      throw ParseError("truncated tensor payload", offset());
    }
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                               (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    v = std::bit_cast<float>(bits);
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_tensor(in);
}

}  // namespace versnet
