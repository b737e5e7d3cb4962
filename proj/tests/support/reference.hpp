#pragma once

// Naive double-precision reference implementations used as test oracles.
// They follow the textbook definitions directly and share no code with the
// library kernels.

#include <cstddef>
#include <functional>
#include <vector>

#include "versnet/maps.hpp"
#include "versnet/network.hpp"
#include "versnet/tensor.hpp"

namespace versnet::ref {

struct DTensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  DTensor() = default;
  explicit DTensor(std::vector<std::size_t> s, double v = 0.0);
  explicit DTensor(const Tensor& t);

  std::size_t size() const { return data.size(); }
  double& at(std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t c, std::size_t h, std::size_t w) const;
};

DTensor conv2d(const DTensor& x, const DTensor& w, const DTensor* bias, std::size_t stride, const Padding& pad);
/// Scatter form: every input pixel adds a stride-spaced copy of the kernel.
DTensor tconv2d(const DTensor& x, const DTensor& w, const DTensor* bias, std::size_t stride, const Padding& pad);
DTensor maxpool2x2(const DTensor& x);
DTensor relu(const DTensor& x);
double softmax_cross_entropy(const DTensor& logits, const LabelImage& labels);

/// Parameter tensors of a network in canonical order, widened to double.
std::vector<DTensor> widen(const NetworkParams& params);

/// Loss of the full network in double precision with dropout disabled. The
/// layer structure comes from `net`; values come from `values` (see widen).
double network_loss(const NetworkParams& net, const std::vector<DTensor>& values, const Tensor& image,
                    const LabelImage& labels);
double network_loss(const NetworkParams& net, const Tensor& image, const LabelImage& labels);

/// Central difference of f with respect to x[i].
double central_difference(const std::function<double()>& f, double& xi, double step);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-4);

}  // namespace versnet::ref
