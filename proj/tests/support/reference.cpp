#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace versnet::ref {

DTensor::DTensor(std::vector<std::size_t> s, double v) : shape(std::move(s)) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  data.assign(n, v);
}

DTensor::DTensor(const Tensor& t) : shape(t.shape()), data(t.data().begin(), t.data().end()) {}

double& DTensor::at(std::size_t c, std::size_t h, std::size_t w) { return data[(c * shape[1] + h) * shape[2] + w]; }
double DTensor::at(std::size_t c, std::size_t h, std::size_t w) const {
  return data[(c * shape[1] + h) * shape[2] + w];
}

DTensor conv2d(const DTensor& x, const DTensor& w, const DTensor* bias, std::size_t stride, const Padding& pad) {
  const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const std::size_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[1] != C) throw std::invalid_argument("ref conv2d: channel mismatch");
  const std::size_t oh = (H + pad.top + pad.bottom - kh) / stride + 1;
  const std::size_t ow = (W + pad.left + pad.right - kw) / stride + 1;
  DTensor y({O, oh, ow});
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double s = bias ? bias->data[o] : 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v) {
              const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad.top);
              const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad.left);
              if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
              s += w.data[((o * C + c) * kh + u) * kw + v] * x.at(c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
            }
          }
        }
        y.at(o, i, j) = s;
      }
    }
  }
  return y;
}

DTensor tconv2d(const DTensor& x, const DTensor& w, const DTensor* bias, std::size_t stride, const Padding& pad) {
  const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const std::size_t O = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[0] != C) throw std::invalid_argument("ref tconv2d: channel mismatch");
  const std::size_t oh = (H - 1) * stride + kh - pad.top - pad.bottom;
  const std::size_t ow = (W - 1) * stride + kw - pad.left - pad.right;
  DTensor y({O, oh, ow});
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) y.at(o, i, j) = bias ? bias->data[o] : 0.0;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        for (std::size_t o = 0; o < O; ++o) {
          for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v) {
              const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad.top);
              const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad.left);
              if (r < 0 || q < 0 || r >= static_cast<long>(oh) || q >= static_cast<long>(ow)) continue;
              y.at(o, static_cast<std::size_t>(r), static_cast<std::size_t>(q)) +=
                  x.at(c, i, j) * w.data[((c * O + o) * kh + u) * kw + v];
            }
          }
        }
      }
    }
  }
  return y;
}

DTensor maxpool2x2(const DTensor& x) {
  const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const std::size_t oh = (H + 1) / 2, ow = (W + 1) / 2;
  DTensor y({C, oh, ow});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 2 * i; r < std::min(H, 2 * i + 2); ++r) {
          for (std::size_t q = 2 * j; q < std::min(W, 2 * j + 2); ++q) m = std::max(m, x.at(c, r, q));
        }
        y.at(c, i, j) = m;
      }
    }
  }
  return y;
}

DTensor relu(const DTensor& x) {
  DTensor y = x;
  for (auto& v : y.data) v = std::max(v, 0.0);
  return y;
}

double softmax_cross_entropy(const DTensor& logits, const LabelImage& labels) {
  const std::size_t K = logits.shape[0], H = logits.shape[1], W = logits.shape[2];
  double total = 0.0;
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) m = std::max(m, logits.at(k, i, j));
      double z = 0.0;
      for (std::size_t k = 0; k < K; ++k) z += std::exp(logits.at(k, i, j) - m);
      const std::size_t t = labels.at(i, j) - 1u;
      total += -(logits.at(t, i, j) - m - std::log(z));
    }
  }
  return total / static_cast<double>(H * W);
}

namespace {

DTensor pad_bottom_right(const DTensor& x, std::size_t multiple) {
  const std::size_t H = x.shape[1], W = x.shape[2];
  const std::size_t ph = (H + multiple - 1) / multiple * multiple, pw = (W + multiple - 1) / multiple * multiple;
  DTensor y({x.shape[0], ph, pw});
  for (std::size_t c = 0; c < x.shape[0]; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) y.at(c, i, j) = x.at(c, i, j);
    }
  }
  return y;
}

DTensor crop(const DTensor& x, std::size_t h, std::size_t w) {
  DTensor y({x.shape[0], h, w});
  for (std::size_t c = 0; c < x.shape[0]; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) y.at(c, i, j) = x.at(c, i, j);
    }
  }
  return y;
}

}  // namespace

std::vector<DTensor> widen(const NetworkParams& params) {
  std::vector<DTensor> out;
  for (const Tensor* t : params.tensors()) out.emplace_back(*t);
  return out;
}

double network_loss(const NetworkParams& net, const Tensor& image, const LabelImage& labels) {
  return network_loss(net, widen(net), image, labels);
}

double network_loss(const NetworkParams& net, const std::vector<DTensor>& values, const Tensor& image,
                    const LabelImage& labels) {
  DTensor x = pad_bottom_right(DTensor(image), 16);
  std::size_t next = 0;
  for (const auto& layer : net.layers) {
    const DTensor& w = values.at(next++);
    const DTensor* bp = layer.params.bias ? &values.at(next++) : nullptr;
    if (layer.kind == LayerKind::TransposedConv) {
      x = tconv2d(x, w, bp, layer.params.stride, layer.params.pad);
      continue;
    }
    x = conv2d(x, w, bp, layer.params.stride, layer.params.pad);
    if (layer.name == "score") continue;
    x = relu(x);
    if (layer.name.size() > 6 && layer.name.compare(0, 5, "block") == 0 && layer.name.back() == 'b') x = maxpool2x2(x);
  }
  return softmax_cross_entropy(crop(x, labels.height(), labels.width()), labels);
}

double central_difference(const std::function<double()>& f, double& xi, double step) {
  const double saved = xi;
  xi = saved + step;
  const double up = f();
  xi = saved - step;
  const double down = f();
  xi = saved;
  return (up - down) / (2.0 * step);
}

double relative_error(double a, double b, double floor) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

}  // namespace versnet::ref
