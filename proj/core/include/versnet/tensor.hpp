#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace versnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Seedable pseudo-random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are computed here rather than with the <random>
/// distribution classes (those are implementation-defined), so a given seed
/// yields the same stream on every platform:
///   uniform   - top 53 bits of one engine draw, scaled into [0, 1)
///   normal    - Box-Muller, both variates consumed in order
///   exponential - inverse CDF, -log(1 - u)
/// A Prng has a single owner; copy it to fork a reproducible sub-stream.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double exponential();
  bool bernoulli(double p);
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// splitmix64 finalizer; derives independent child seeds from (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// Dense row-major float tensor. Image-like tensors are laid out C x H x W.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, float value);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* raw() noexcept { return data_.data(); }
  const float* raw() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-3 accessors, (c, h, w).
  float& at(std::size_t c, std::size_t h, std::size_t w);
  float at(std::size_t c, std::size_t h, std::size_t w) const;

  // Number of channels / rows / cols for rank-3 tensors.
  std::size_t channels() const { return dim(0); }
  std::size_t height() const { return dim(1); }
  std::size_t width() const { return dim(2); }

  void fill(float value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(float scale);

  bool all_finite() const;
  float max_abs() const;
  double sum() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, float s);

double dot(const Tensor& a, const Tensor& b);

Tensor tensor_fill(const Shape& shape, float value);
Tensor tensor_randn(const Shape& shape, float mean, float stddev, Prng& rng);

struct Padding {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  static Padding uniform(std::size_t p) { return {p, p, p, p}; }
  friend bool operator==(const Padding&, const Padding&) = default;
};

Tensor pad2d(const Tensor& t, const Padding& pad, float value = 0.0f);
Tensor crop2d(const Tensor& t, std::size_t top, std::size_t left,
              std::size_t out_h, std::size_t out_w);

// "VNT1" little-endian tensor encoding.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

namespace detail {
void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);
void write_f32(std::ostream& out, float v);
float read_f32(std::istream& in);
}  // namespace detail

}  // namespace versnet
