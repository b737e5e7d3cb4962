#include "versnet/nn_ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "versnet/errors.hpp"

namespace versnet {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstMatMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col buffer, in floats.
constexpr std::size_t kColsBudget = std::size_t{1} << 22;

// Geometry of a strided, padded correlation between an "image" grid and an
// "output" grid. conv2d reads the image and writes the output; tconv2d is the
// adjoint and goes the other way.
struct Geometry {
  std::size_t channels, height, width;  // image
  std::size_t kh, kw, stride;
  Padding pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
};

Geometry conv_geometry(const Tensor& x, const Tensor& w, std::size_t stride, const Padding& pad) {
  if (stride == 0) throw InvalidArgument("conv stride must be >= 1");
  const std::size_t ph = x.height() + pad.top + pad.bottom;
  const std::size_t pw = x.width() + pad.left + pad.right;
  const std::size_t kh = w.dim(2), kw = w.dim(3);
  if (ph < kh || pw < kw) {
    throw ShapeError("conv kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(ph) + "x" + std::to_string(pw));
  }
  return Geometry{x.channels(), x.height(), x.width(), kh, kw, stride, pad,
                  (ph - kh) / stride + 1, (pw - kw) / stride + 1};
}

std::size_t rows_per_chunk(const Geometry& g) {
  const std::size_t per_row = g.patch() * g.out_w;
  return std::clamp<std::size_t>(kColsBudget / std::max<std::size_t>(per_row, 1), 1, g.out_h);
}

// cols[(c*kh + u)*kw + v][(i - r0)*out_w + j] = image[c][i*s + u - top][j*s + v - left]
void im2col(const float* image, const Geometry& g, std::size_t r0, std::size_t r1, float* cols) {
  const std::size_t positions = (r1 - r0) * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      for (std::size_t v = 0; v < g.kw; ++v) {
        float* row = cols + ((c * g.kh + u) * g.kw + v) * positions;
        for (std::size_t i = r0; i < r1; ++i) {
          float* dst = row + (i - r0) * g.out_w;
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * g.stride + u) -
                                   static_cast<std::ptrdiff_t>(g.pad.top);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          for (std::size_t j = 0; j < g.out_w; ++j) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(j * g.stride + v) -
                                     static_cast<std::ptrdiff_t>(g.pad.left);
            dst[j] = (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0f : src[x];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the image grid.
void col2im(const float* cols, const Geometry& g, std::size_t r0, std::size_t r1, float* image) {
  const std::size_t positions = (r1 - r0) * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      for (std::size_t v = 0; v < g.kw; ++v) {
        const float* row = cols + ((c * g.kh + u) * g.kw + v) * positions;
        for (std::size_t i = r0; i < r1; ++i) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * g.stride + u) -
                                   static_cast<std::ptrdiff_t>(g.pad.top);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const float* src = row + (i - r0) * g.out_w;
          float* dst = image + (c * g.height + static_cast<std::size_t>(y)) * g.width;
          for (std::size_t j = 0; j < g.out_w; ++j) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(j * g.stride + v) -
                                     static_cast<std::ptrdiff_t>(g.pad.left);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(g.width)) dst[x] += src[j];
          }
        }
      }
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

// image-side correlation:  out[o][pos] = sum_k W[o][k] * cols[k][pos]
void correlate(const Tensor& image, const Tensor& weights, const Geometry& g, Tensor& out) {
  const std::size_t n_out = weights.dim(0);
  const std::size_t k = g.patch();
  const std::size_t hw = g.out_h * g.out_w;
  const std::size_t chunk = rows_per_chunk(g);
  std::vector<float> cols(k * chunk * g.out_w);
  ConstMatMap w(weights.raw(), n_out, k, Eigen::OuterStride<>(k));
  for (std::size_t r0 = 0; r0 < g.out_h; r0 += chunk) {
    const std::size_t r1 = std::min(g.out_h, r0 + chunk);
    const std::size_t p = (r1 - r0) * g.out_w;
    im2col(image.raw(), g, r0, r1, cols.data());
    ConstMatMap c(cols.data(), k, p, Eigen::OuterStride<>(p));
    MatMap o(out.raw() + r0 * g.out_w, n_out, p, Eigen::OuterStride<>(hw));
    o.noalias() += w * c;
  }
}

// Adjoint of correlate with respect to the image: image += col2im(W^T * src)
void correlate_adjoint(const Tensor& src, const Tensor& weights, const Geometry& g, Tensor& image) {
  const std::size_t n_out = weights.dim(0);
  const std::size_t k = g.patch();
  const std::size_t hw = g.out_h * g.out_w;
  const std::size_t chunk = rows_per_chunk(g);
  std::vector<float> cols(k * chunk * g.out_w);
  ConstMatMap w(weights.raw(), n_out, k, Eigen::OuterStride<>(k));
  for (std::size_t r0 = 0; r0 < g.out_h; r0 += chunk) {
    const std::size_t r1 = std::min(g.out_h, r0 + chunk);
    const std::size_t p = (r1 - r0) * g.out_w;
    ConstMatMap s(src.raw() + r0 * g.out_w, n_out, p, Eigen::OuterStride<>(hw));
    MatMap c(cols.data(), k, p, Eigen::OuterStride<>(p));
    c.noalias() = w.transpose() * s;
    col2im(cols.data(), g, r0, r1, image.raw());
  }
}

// Weight gradient shared by conv and tconv: dW[o][k] += sum_pos out_side[o][pos] * cols[k][pos]
void correlate_weight_grad(const Tensor& image, const Tensor& out_side, const Geometry& g,
                           Tensor& d_weights) {
  const std::size_t n_out = d_weights.dim(0);
  const std::size_t k = g.patch();
  const std::size_t hw = g.out_h * g.out_w;
  const std::size_t chunk = rows_per_chunk(g);
  std::vector<float> cols(k * chunk * g.out_w);
  MatMap dw(d_weights.raw(), n_out, k, Eigen::OuterStride<>(k));
  for (std::size_t r0 = 0; r0 < g.out_h; r0 += chunk) {
    const std::size_t r1 = std::min(g.out_h, r0 + chunk);
    const std::size_t p = (r1 - r0) * g.out_w;
    im2col(image.raw(), g, r0, r1, cols.data());
    ConstMatMap c(cols.data(), k, p, Eigen::OuterStride<>(p));
    ConstMatMap s(out_side.raw() + r0 * g.out_w, n_out, p, Eigen::OuterStride<>(hw));
    dw.noalias() += s * c.transpose();
  }
}

}  // namespace

// ---------------------------------------------------------------- conv2d

Tensor conv2d_forward(const Tensor& x, const ConvParams& p) {
  require_rank(x, 3, "conv2d input");
  require_rank(p.weights, 4, "conv2d weights");
  if (p.weights.dim(1) != x.channels()) {
    throw ShapeError("conv2d: weights expect " + std::to_string(p.weights.dim(1)) +
                     " input channels, got " + std::to_string(x.channels()));
  }
  const std::size_t out_c = p.weights.dim(0);
  if (p.bias && p.bias->size() != out_c) throw ShapeError("conv2d: bias length != outC");
  const Geometry g = conv_geometry(x, p.weights, p.stride, p.pad);
  Tensor out({out_c, g.out_h, g.out_w}, 0.0f);
  if (p.bias) {
    const std::size_t hw = g.out_h * g.out_w;
    for (std::size_t o = 0; o < out_c; ++o) {
      std::fill_n(out.raw() + o * hw, hw, (*p.bias)[o]);
    }
  }
  correlate(x, p.weights, g, out);
  return out;
}

GradPair conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& d_out,
                         bool need_input_grad) {
  require_rank(x, 3, "conv2d input");
  const Geometry g = conv_geometry(x, p.weights, p.stride, p.pad);
  const Shape expected{p.weights.dim(0), g.out_h, g.out_w};
  if (d_out.shape() != expected) {
    throw ShapeError("conv2d_backward: dOut shape " + shape_string(d_out.shape()) +
                     " != forward output " + shape_string(expected));
  }
  GradPair grads;
  grads.d_weights = Tensor(p.weights.shape(), 0.0f);
  correlate_weight_grad(x, d_out, g, grads.d_weights);
  if (p.bias) {
    Tensor db(p.bias->shape(), 0.0f);
    const std::size_t hw = g.out_h * g.out_w;
    for (std::size_t o = 0; o < expected[0]; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += d_out[o * hw + i];
      db[o] = static_cast<float>(s);
    }
    grads.d_bias = std::move(db);
  }
  if (need_input_grad) {
    grads.d_input = Tensor(x.shape(), 0.0f);
    correlate_adjoint(d_out, p.weights, g, grads.d_input);
  }
  return grads;
}

// ---------------------------------------------------------------- tconv2d

namespace {

Geometry tconv_geometry(const Tensor& x, const ConvParams& p) {
  require_rank(x, 3, "tconv2d input");
  require_rank(p.weights, 4, "tconv2d weights");
  if (p.weights.dim(0) != x.channels()) {
    throw ShapeError("tconv2d: weights expect " + std::to_string(p.weights.dim(0)) +
                     " input channels, got " + std::to_string(x.channels()));
  }
  if (p.stride == 0) throw InvalidArgument("tconv stride must be >= 1");
  const std::size_t kh = p.weights.dim(2), kw = p.weights.dim(3);
  const std::size_t full_h = (x.height() - 1) * p.stride + kh;
  const std::size_t full_w = (x.width() - 1) * p.stride + kw;
  if (full_h <= p.pad.top + p.pad.bottom || full_w <= p.pad.left + p.pad.right) {
    throw ShapeError("tconv2d: padding consumes the whole output");
  }
  const std::size_t out_h = full_h - p.pad.top - p.pad.bottom;
  const std::size_t out_w = full_w - p.pad.left - p.pad.right;
  // Seen from the output grid this is an ordinary conv whose output is x.
  Geometry g{p.weights.dim(1), out_h, out_w, kh, kw, p.stride, p.pad, 0, 0};
  const std::size_t ph = out_h + p.pad.top + p.pad.bottom;
  const std::size_t pw = out_w + p.pad.left + p.pad.right;
  g.out_h = (ph - kh) / p.stride + 1;
  g.out_w = (pw - kw) / p.stride + 1;
  if (g.out_h != x.height() || g.out_w != x.width()) {
    throw ShapeError("tconv2d: inconsistent geometry");
  }
  return g;
}

}  // namespace

Tensor tconv2d_forward(const Tensor& x, const ConvParams& p) {
  const Geometry g = tconv_geometry(x, p);
  Tensor out({g.channels, g.height, g.width}, 0.0f);
  correlate_adjoint(x, p.weights, g, out);
  if (p.bias) {
    if (p.bias->size() != g.channels) throw ShapeError("tconv2d: bias length != outC");
    const std::size_t hw = g.height * g.width;
    for (std::size_t o = 0; o < g.channels; ++o) {
      for (std::size_t i = 0; i < hw; ++i) out[o * hw + i] += (*p.bias)[o];
    }
  }
  return out;
}

GradPair tconv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& d_out,
                          bool need_input_grad) {
  const Geometry g = tconv_geometry(x, p);
  const Shape expected{g.channels, g.height, g.width};
  if (d_out.shape() != expected) {
    throw ShapeError("tconv2d_backward: dOut shape " + shape_string(d_out.shape()) +
                     " != forward output " + shape_string(expected));
  }
  GradPair grads;
  grads.d_weights = Tensor(p.weights.shape(), 0.0f);
  correlate_weight_grad(d_out, x, g, grads.d_weights);
  if (p.bias) {
    Tensor db(p.bias->shape(), 0.0f);
    const std::size_t hw = g.height * g.width;
    for (std::size_t o = 0; o < g.channels; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += d_out[o * hw + i];
      db[o] = static_cast<float>(s);
    }
    grads.d_bias = std::move(db);
  }
  if (need_input_grad) {
    grads.d_input = Tensor(x.shape(), 0.0f);
    correlate(d_out, p.weights, g, grads.d_input);
  }
  return grads;
}

Tensor bilinear_kernel(std::size_t factor, std::size_t channels) {
  if (factor < 1) throw InvalidArgument("bilinear_kernel: factor must be >= 1");
  if (channels < 1) throw InvalidArgument("bilinear_kernel: channels must be >= 1");
  const std::size_t size = 2 * factor;
  const double f = static_cast<double>(factor);
  const double center = (2.0 * f - 1.0 - static_cast<double>(factor % 2)) / (2.0 * f);
  std::vector<double> profile(size);
  for (std::size_t i = 0; i < size; ++i) {
    profile[i] = 1.0 - std::fabs(static_cast<double>(i) / f - center);
  }
  Tensor k({channels, channels, size, size}, 0.0f);
  for (std::size_t c = 0; c < channels; ++c) {
    float* block = k.raw() + (c * channels + c) * size * size;
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        block[i * size + j] = static_cast<float>(profile[i] * profile[j]);
      }
    }
  }
  return k;
}

// ---------------------------------------------------------------- pooling

PoolResult maxpool2x2_forward(const Tensor& x) {
  require_rank(x, 3, "maxpool2x2 input");
  const std::size_t c = x.channels(), h = x.height(), w = x.width();
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  PoolResult r{Tensor({c, oh, ow}, 0.0f), PoolIndices{x.shape(), std::vector<std::uint32_t>(c * oh * ow)}};
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (ch * h + 2 * i) * w + 2 * j;
        float best_v = x[best];
        for (std::size_t u = 2 * i; u < std::min(h, 2 * i + 2); ++u) {
          for (std::size_t v = 2 * j; v < std::min(w, 2 * j + 2); ++v) {
            const std::size_t idx = (ch * h + u) * w + v;
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (ch * oh + i) * ow + j;
        r.output[o] = best_v;
        r.indices.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool2x2_backward(const PoolIndices& indices, const Tensor& d_out) {
  if (d_out.size() != indices.argmax.size()) {
    throw ShapeError("maxpool2x2_backward: dOut has " + std::to_string(d_out.size()) +
                     " elements, indices have " + std::to_string(indices.argmax.size()));
  }
  Tensor d_in(indices.input_shape, 0.0f);
  for (std::size_t o = 0; o < d_out.size(); ++o) d_in[indices.argmax[o]] += d_out[o];
  return d_in;
}

// ---------------------------------------------------------------- activations

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = v > 0.0f ? v : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& d_out) {
  if (x.shape() != d_out.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor d = d_out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(x[i] > 0.0f)) d[i] = 0.0f;
  }
  return d;
}

DropoutResult dropout_forward(const Tensor& x, float rate, Mode mode, Prng& rng) {
  if (!(rate >= 0.0f && rate < 1.0f)) throw InvalidArgument("dropout rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0f) return {x, Tensor(x.shape(), 1.0f)};
  DropoutResult r{x, Tensor(x.shape(), 0.0f)};
  const float scale = 1.0f / (1.0f - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = rng.bernoulli(1.0 - rate);
    r.mask[i] = keep ? 1.0f : 0.0f;
    r.output[i] = keep ? x[i] * scale : 0.0f;
  }
  return r;
}

Tensor dropout_backward(const Tensor& mask, float rate, const Tensor& d_out) {
  if (!(rate >= 0.0f && rate < 1.0f)) throw InvalidArgument("dropout rate must be in [0, 1)");
  if (mask.shape() != d_out.shape()) throw ShapeError("dropout_backward: shape mismatch");
  const float scale = 1.0f / (1.0f - rate);
  Tensor d = d_out;
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask[i] != 0.0f ? d[i] * scale : 0.0f;
  return d;
}

// ---------------------------------------------------------------- softmax + loss

ScoreMap softmax_pixelwise(const Tensor& scores) {
  require_rank(scores, 3, "softmax_pixelwise");
  const std::size_t nc = scores.channels();
  const std::size_t hw = scores.height() * scores.width();
  ScoreMap out{Tensor(scores.shape(), 0.0f), ScoreKind::Probabilities};
  std::vector<double> e(nc);
  for (std::size_t i = 0; i < hw; ++i) {
    float m = scores[i];
    for (std::size_t k = 1; k < nc; ++k) m = std::max(m, scores[k * hw + i]);
    double s = 0.0;
    for (std::size_t k = 0; k < nc; ++k) {
      e[k] = std::exp(static_cast<double>(scores[k * hw + i]) - m);
      s += e[k];
    }
    for (std::size_t k = 0; k < nc; ++k) out.values[k * hw + i] = static_cast<float>(e[k] / s);
  }
  return out;
}

namespace {

void check_labels(const Tensor& scores, const LabelImage& labels, const char* op) {
  require_rank(scores, 3, op);
  if (labels.height() != scores.height() || labels.width() != scores.width()) {
    throw ShapeError(std::string(op) + ": label image " + std::to_string(labels.height()) + "x" +
                     std::to_string(labels.width()) + " not congruent with scores " +
                     shape_string(scores.shape()));
  }
  labels.validate(static_cast<int>(scores.channels()));
}

}  // namespace

LossResult cross_entropy_loss(const ScoreMap& q, const LabelImage& labels) {
  check_labels(q.values, labels, "cross_entropy_loss");
  const std::size_t hw = labels.size();
  const double inv_n = 1.0 / static_cast<double>(hw);
  LossResult r{0.0, q.values};
  double total = 0.0;
  for (std::size_t i = 0; i < hw; ++i) {
    const std::size_t k = static_cast<std::size_t>(labels[i]) - 1;
    const double p = std::max<double>(q.values[k * hw + i], std::numeric_limits<double>::min());
    total -= std::log(p);
    r.d_scores[k * hw + i] -= 1.0f;
  }
  r.d_scores *= static_cast<float>(inv_n);
  r.loss = total * inv_n;
  return r;
}

LossResult softmax_cross_entropy(const Tensor& logits, const LabelImage& labels) {
  check_labels(logits, labels, "softmax_cross_entropy");
  const std::size_t nc = logits.channels();
  const std::size_t hw = labels.size();
  const double inv_n = 1.0 / static_cast<double>(hw);
  LossResult r{0.0, Tensor(logits.shape(), 0.0f)};
  std::vector<double> e(nc);
  double total = 0.0;
  for (std::size_t i = 0; i < hw; ++i) {
    double m = logits[i];
    for (std::size_t k = 1; k < nc; ++k) m = std::max<double>(m, logits[k * hw + i]);
    double s = 0.0;
    for (std::size_t k = 0; k < nc; ++k) {
      e[k] = std::exp(static_cast<double>(logits[k * hw + i]) - m);
      s += e[k];
    }
    const std::size_t t = static_cast<std::size_t>(labels[i]) - 1;
    total += std::log(s) + m - logits[t * hw + i];
    for (std::size_t k = 0; k < nc; ++k) {
      const double grad = e[k] / s - (k == t ? 1.0 : 0.0);
      r.d_scores[k * hw + i] = static_cast<float>(grad * inv_n);
    }
  }
  r.loss = total * inv_n;
  return r;
}

// ---------------------------------------------------------------- optimizer

MomentumState MomentumState::zeros_like(std::span<const Tensor* const> params) {
  MomentumState s;
  s.velocity.reserve(params.size());
  for (const Tensor* p : params) s.velocity.emplace_back(p->shape(), 0.0f);
  return s;
}

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                       MomentumState& state, float lr, float mu) {
  if (!(lr >= 0.0f) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be >= 0");
  if (!(mu >= 0.0f && mu < 1.0f)) throw InvalidArgument("momentum must be in [0, 1)");
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ShapeError("sgd_momentum_step: parameter/gradient/velocity counts differ");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& theta = *params[t];
    const Tensor& g = *grads[t];
    Tensor& v = state.velocity[t];
    if (theta.shape() != g.shape() || theta.shape() != v.shape()) {
      throw ShapeError("sgd_momentum_step: shape mismatch at tensor " + std::to_string(t));
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      theta[i] -= lr * v[i];
    }
  }
}

}  // namespace versnet
