#include "versnet/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "versnet/errors.hpp"

namespace versnet {

namespace {

constexpr char kCheckpointMagic[4] = {'V', 'N', 'C', 'K'};
constexpr std::size_t kFcKernel = 6;
const Padding kFcPad{2, 3, 2, 3};

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

ConvParams he_conv(std::size_t in_c, std::size_t out_c, std::size_t k, const Padding& pad, Prng& rng) {
  const float stddev = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
  return ConvParams{tensor_randn({out_c, in_c, k, k}, 0.0f, stddev, rng),
                    Tensor({out_c}, 0.0f), 1, pad};
}

// Activations kept for the backward pass.
struct Trace {
  std::size_t height = 0, width = 0;
  Tensor padded_input;
  // Per block: conv-a input, conv-a output (post-ReLU), conv-b output (post-ReLU), pool.
  std::array<Tensor, 4> block_in;
  std::array<Tensor, 4> relu_a;
  std::array<Tensor, 4> relu_b;
  std::array<PoolIndices, 4> pool;
  Tensor fc_in;
  Tensor fc_relu;
  Tensor dropout_mask;
  Tensor score_in;
  Tensor score_out;
  Tensor upsampled;
};

Tensor run_forward(const NetworkParams& params, const SarImage& image, Mode mode, Prng& rng,
                   Trace* trace) {
  const std::size_t h = image.height(), w = image.width();
  const Padding grid{0, round_up(h, kDownsampleFactor) - h, 0, round_up(w, kDownsampleFactor) - w};
  if (image.pixels().channels() != static_cast<std::size_t>(params.config.input_channels)) {
    throw ShapeError("forward: image has " + std::to_string(image.pixels().channels()) +
                     " channels, network expects " + std::to_string(params.config.input_channels));
  }
  Tensor x = pad2d(image.pixels(), grid, 0.0f);
  if (trace) {
    trace->height = h;
    trace->width = w;
  }
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& conv_a = params.layers[2 * b].params;
    const auto& conv_b = params.layers[2 * b + 1].params;
    Tensor a = relu_forward(conv2d_forward(x, conv_a));
    Tensor c = relu_forward(conv2d_forward(a, conv_b));
    PoolResult pooled = maxpool2x2_forward(c);
    if (trace) {
      trace->block_in[b] = std::move(x);
      trace->relu_a[b] = std::move(a);
      trace->relu_b[b] = std::move(c);
      trace->pool[b] = std::move(pooled.indices);
    }
    x = std::move(pooled.output);
  }
  Tensor fc = relu_forward(conv2d_forward(x, params.layers[8].params));
  DropoutResult dropped = dropout_forward(fc, params.config.dropout_rate, mode, rng);
  Tensor score = conv2d_forward(dropped.output, params.layers[9].params);
  Tensor up = tconv2d_forward(score, params.layers[10].params);
  Tensor logits = crop2d(up, 0, 0, h, w);
  if (trace) {
    trace->fc_in = std::move(x);
    trace->fc_relu = std::move(fc);
    trace->dropout_mask = std::move(dropped.mask);
    trace->score_in = std::move(dropped.output);
    trace->score_out = std::move(score);
    trace->upsampled = std::move(up);
  }
  return logits;
}

}  // namespace

void VersNetConfig::validate() const {
  if (num_classes < 2 || num_classes > 255) throw InvalidArgument("num_classes must be in [2, 255]");
  if (input_channels < 1) throw InvalidArgument("input_channels must be >= 1");
  for (int c : block_channels) {
    if (c < 1) throw InvalidArgument("block channel counts must be >= 1");
  }
  if (fc_channels < 1) throw InvalidArgument("fc_channels must be >= 1");
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    throw InvalidArgument("dropout_rate must be in [0, 1)");
  }
}

// ---------------------------------------------------------------- NetworkParams

std::vector<Tensor*> NetworkParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& l : layers) {
    out.push_back(&l.params.weights);
    if (l.params.bias) out.push_back(&*l.params.bias);
  }
  return out;
}

std::vector<const Tensor*> NetworkParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers) {
    out.push_back(&l.params.weights);
    if (l.params.bias) out.push_back(&*l.params.bias);
  }
  return out;
}

std::vector<std::string> NetworkParams::tensor_names() const {
  std::vector<std::string> out;
  for (const auto& l : layers) {
    out.push_back(l.name + ".weights");
    if (l.params.bias) out.push_back(l.name + ".bias");
  }
  return out;
}

const NamedLayer& NetworkParams::layer(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  throw InvalidArgument("no layer named " + name);
}

NamedLayer& NetworkParams::layer(const std::string& name) {
  return const_cast<NamedLayer&>(std::as_const(*this).layer(name));
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

bool operator==(const NetworkParams& a, const NetworkParams& b) {
  if (!(a.config == b.config) || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.name != y.name || x.kind != y.kind || x.params.stride != y.params.stride ||
        !(x.params.pad == y.params.pad) || !(x.params.weights == y.params.weights) ||
        x.params.bias != y.params.bias) {
      return false;
    }
  }
  return true;
}

std::size_t parameter_count(const VersNetConfig& config) {
  config.validate();
  std::size_t n = 0;
  std::size_t in = static_cast<std::size_t>(config.input_channels);
  for (int c : config.block_channels) {
    const std::size_t out = static_cast<std::size_t>(c);
    n += in * out * 9 + out;
    n += out * out * 9 + out;
    in = out;
  }
  const std::size_t fc = static_cast<std::size_t>(config.fc_channels);
  const std::size_t nc = static_cast<std::size_t>(config.num_classes);
  n += in * fc * kFcKernel * kFcKernel + fc;
  n += fc * nc + nc;
  n += nc * nc * kUpsampleKernel * kUpsampleKernel;
  return n;
}

// ---------------------------------------------------------------- SarImage

SarImage::SarImage(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rank() != 3) throw ShapeError("SarImage expects a C x H x W tensor");
  if (!pixels_.all_finite()) throw InvalidArgument("SarImage pixels must be finite");
}

SarImage::SarImage(std::size_t height, std::size_t width, float value) {
  if (height == 0 || width == 0) throw InvalidArgument("SarImage must be at least 1x1");
  pixels_ = Tensor({1, height, width}, value);
}

std::vector<const Tensor*> NetworkGrads::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& g : layers) {
    out.push_back(&g.d_weights);
    if (g.d_bias) out.push_back(&*g.d_bias);
  }
  return out;
}

// ---------------------------------------------------------------- build / forward

NetworkParams build(const VersNetConfig& config, Prng& rng) {
  config.validate();
  NetworkParams net;
  net.config = config;
  std::size_t in = static_cast<std::size_t>(config.input_channels);
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t out = static_cast<std::size_t>(config.block_channels[b]);
    const std::string prefix = "block" + std::to_string(b + 1);
    net.layers.push_back({prefix + "a", LayerKind::Conv, he_conv(in, out, 3, Padding::uniform(1), rng)});
    net.layers.push_back({prefix + "b", LayerKind::Conv, he_conv(out, out, 3, Padding::uniform(1), rng)});
    in = out;
  }
  const std::size_t fc = static_cast<std::size_t>(config.fc_channels);
  const std::size_t nc = static_cast<std::size_t>(config.num_classes);
  net.layers.push_back({"fc6", LayerKind::Conv, he_conv(in, fc, kFcKernel, kFcPad, rng)});
  net.layers.push_back({"score", LayerKind::Conv,
                        ConvParams{Tensor({nc, fc, 1, 1}, 0.0f), Tensor({nc}, 0.0f), 1, Padding{}}});
  net.layers.push_back({"upsample", LayerKind::TransposedConv,
                        ConvParams{bilinear_kernel(kDownsampleFactor, nc), std::nullopt,
                                   kDownsampleFactor, Padding::uniform(kUpsamplePad)}});
  return net;
}

ScoreMap forward(const NetworkParams& params, const SarImage& image, Mode mode, Prng& rng) {
  return ScoreMap{run_forward(params, image, mode, rng, nullptr), ScoreKind::Logits};
}

ForwardBackwardResult forward_backward(const NetworkParams& params, const SarImage& image,
                                       const LabelImage& labels, Prng& rng) {
  if (labels.height() != image.height() || labels.width() != image.width()) {
    throw InvalidLabel("label image " + std::to_string(labels.height()) + "x" +
                       std::to_string(labels.width()) + " does not match image " +
                       std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  labels.validate(params.config.num_classes);

  Trace trace;
  Tensor logits = run_forward(params, image, Mode::Train, rng, &trace);
  LossResult loss = softmax_cross_entropy(logits, labels);

  ForwardBackwardResult result;
  result.loss = loss.loss;
  result.grads.layers.resize(params.layers.size());
  auto& g = result.grads.layers;

  // Gradient on the full (uncropped) upsampled grid: zero outside the crop.
  const Tensor& up = trace.upsampled;
  Tensor d_up(up.shape(), 0.0f);
  const std::size_t nc = up.channels();
  for (std::size_t k = 0; k < nc; ++k) {
    for (std::size_t r = 0; r < trace.height; ++r) {
      const float* src = loss.d_scores.raw() + (k * trace.height + r) * trace.width;
      std::copy(src, src + trace.width, d_up.raw() + (k * up.height() + r) * up.width());
    }
  }
  g[10] = tconv2d_backward(trace.score_out, params.layers[10].params, d_up);
  g[9] = conv2d_backward(trace.score_in, params.layers[9].params, g[10].d_input);
  Tensor d = dropout_backward(trace.dropout_mask, params.config.dropout_rate, g[9].d_input);
  d = relu_backward(trace.fc_relu, d);
  g[8] = conv2d_backward(trace.fc_in, params.layers[8].params, d);
  d = std::move(g[8].d_input);
  for (std::size_t bi = 4; bi-- > 0;) {
    d = maxpool2x2_backward(trace.pool[bi], d);
    d = relu_backward(trace.relu_b[bi], d);
    g[2 * bi + 1] = conv2d_backward(trace.relu_a[bi], params.layers[2 * bi + 1].params, d);
    d = relu_backward(trace.relu_a[bi], g[2 * bi + 1].d_input);
    g[2 * bi] = conv2d_backward(trace.block_in[bi], params.layers[2 * bi].params, d, bi != 0);
    d = std::move(g[2 * bi].d_input);
  }
  // Intermediate input gradients are consumed; drop them.
  for (auto& layer : g) layer.d_input = Tensor();

  result.logits = ScoreMap{std::move(logits), ScoreKind::Logits};
  return result;
}

ScoreMap predict_probabilities(const NetworkParams& params, const SarImage& image) {
  Prng unused(0);
  return softmax_pixelwise(run_forward(params, image, Mode::Eval, unused, nullptr));
}

LabelImage predict(const NetworkParams& params, const SarImage& image) {
  Prng unused(0);
  return argmax_labels(run_forward(params, image, Mode::Eval, unused, nullptr));
}

// ---------------------------------------------------------------- checkpoints

namespace {

void write_string(std::ostream& out, const std::string& s) {
  detail::write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = detail::read_u32(in);
  if (n > 4096) throw ParseError("implausible name length " + std::to_string(n), 0);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw ParseError("truncated name", 0);
  return s;
}

std::size_t stream_offset(std::istream& in) {
  const auto pos = in.tellg();
  return pos < 0 ? 0 : static_cast<std::size_t>(pos);
}

}  // namespace

void save_checkpoint(const std::string& path, const NetworkParams& params,
                     const MomentumState* momentum) {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, 4);
  detail::write_u32(out, kCheckpointVersion);
  const auto& c = params.config;
  detail::write_u32(out, static_cast<std::uint32_t>(c.num_classes));
  detail::write_u32(out, static_cast<std::uint32_t>(c.input_channels));
  for (int b : c.block_channels) detail::write_u32(out, static_cast<std::uint32_t>(b));
  detail::write_u32(out, static_cast<std::uint32_t>(c.fc_channels));
  detail::write_f32(out, c.dropout_rate);

  const auto names = params.tensor_names();
  const auto tensors = params.tensors();
  detail::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    write_string(out, names[i]);
    write_tensor(out, *tensors[i]);
  }
  if (momentum) {
    if (momentum->velocity.size() != tensors.size()) {
      throw ShapeError("save_checkpoint: momentum tensor count != parameter tensor count");
    }
    detail::write_u32(out, static_cast<std::uint32_t>(momentum->velocity.size()));
    for (const auto& v : momentum->velocity) write_tensor(out, v);
  } else {
    detail::write_u32(out, 0);
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open checkpoint for writing: " + path);
  const std::string bytes = out.str();
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  try {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
      throw ParseError("not a checkpoint (bad magic)", 0);
    }
    const std::uint32_t version = detail::read_u32(in);
    if (version != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
    }
    VersNetConfig c;
    c.num_classes = static_cast<int>(detail::read_u32(in));
    c.input_channels = static_cast<int>(detail::read_u32(in));
    for (int& b : c.block_channels) b = static_cast<int>(detail::read_u32(in));
    c.fc_channels = static_cast<int>(detail::read_u32(in));
    c.dropout_rate = detail::read_f32(in);
    c.validate();

    // Build the skeleton for names and shapes, then overwrite every tensor.
    Prng rng(0);
    Checkpoint ck{build(c, rng), std::nullopt};
    const auto names = ck.params.tensor_names();
    auto tensors = ck.params.tensors();
    const std::uint32_t count = detail::read_u32(in);
    if (count != tensors.size()) {
      throw ParseError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                           std::to_string(tensors.size()),
                       stream_offset(in));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const std::size_t at = stream_offset(in);
      const std::string name = read_string(in);
      if (name != names[i]) throw ParseError("expected tensor " + names[i] + ", found " + name, at);
      Tensor t = read_tensor(in);
      if (t.shape() != tensors[i]->shape()) {
        throw ParseError("tensor " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                             shape_string(tensors[i]->shape()),
                         at);
      }
      *tensors[i] = std::move(t);
    }
    const std::uint32_t n_momentum = detail::read_u32(in);
    if (n_momentum != 0) {
      if (n_momentum != tensors.size()) {
        throw ParseError("momentum tensor count mismatch", stream_offset(in));
      }
      MomentumState m;
      for (std::size_t i = 0; i < n_momentum; ++i) {
        Tensor v = read_tensor(in);
        if (v.shape() != tensors[i]->shape()) throw ParseError("momentum shape mismatch", stream_offset(in));
        m.velocity.push_back(std::move(v));
      }
      ck.momentum = std::move(m);
    }
    return ck;
  } catch (const ParseError& e) {
    throw e.in_context(path);
  }
}

}  // namespace versnet
