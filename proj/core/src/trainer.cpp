#include "versnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "versnet/errors.hpp"
#include "versnet/image_io.hpp"

namespace versnet {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShuffleSalt = 0x5348554646ULL;
constexpr std::uint64_t kDropoutSalt = 0x44524f50ULL;

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.vnck", epoch);
  return buf;
}

double mean_target_iou(const EvaluationReport& r) { return r.pixel.average_targets.iou; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (eval_every < 0) throw InvalidArgument("eval_every must be >= 0");
  if (!(lr_decay > 0.0) || !std::isfinite(lr_decay)) throw InvalidArgument("lr decay factor must be > 0");
  if (lr_decay_every < 0) throw InvalidArgument("lr decay interval must be >= 0");
}

double TrainConfig::rate_for_epoch(int epoch) const {
  if (lr_decay_every <= 0) return learning_rate;
  return learning_rate * std::pow(lr_decay, (epoch - 1) / lr_decay_every);
}

std::vector<LoadedChip> load_chips(const DatasetManifest& manifest, int num_classes) {
  std::vector<LoadedChip> chips;
  chips.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    LoadedChip chip;
    chip.id = e.id;
    chip.class_id = e.class_id;
    const std::string img = manifest.image_path(e).string();
    const std::string lbl = manifest.label_path(e).string();
    try {
      chip.image = load_image(img);
    } catch (const ParseError& err) {
      throw IoError("chip " + e.id + ": " + err.what());
    }
    try {
      chip.label = load_label(lbl, num_classes);
    } catch (const ParseError& err) {
      throw IoError("chip " + e.id + ": " + err.what());
    }
    if (chip.label.height() != chip.image.height() || chip.label.width() != chip.image.width()) {
      throw ShapeError("chip " + e.id + ": label " + lbl + " does not match the size of " + img);
    }
    chips.push_back(std::move(chip));
  }
  return chips;
}

TrainResult train(const TrainConfig& config, NetworkParams net, const std::vector<LoadedChip>& chips,
                  const std::vector<LoadedChip>* eval_chips, const TrainProgress& progress) {
  config.validate();
  if (chips.empty()) throw InvalidArgument("training set is empty");
  for (const auto& c : chips) c.label.validate(net.config.num_classes);

  std::ofstream log_file;
  if (!config.checkpoint_dir.empty()) {
    std::error_code ec;
    fs::create_directories(config.checkpoint_dir, ec);
    if (ec) throw IoError("cannot create " + config.checkpoint_dir.string() + ": " + ec.message());
    const fs::path log_path = config.checkpoint_dir / kTrainLogFile;
    log_file.open(log_path, std::ios::trunc);
    if (!log_file) throw IoError("cannot write " + log_path.string());
    log_file << "epoch,mean_loss,eval_mean_iou,seconds\n" << std::flush;
  }

  TrainResult result;
  result.momentum = MomentumState::zeros_like(std::as_const(net).tensors());
  Prng dropout_rng(mix_seed(config.seed, kDropoutSalt));
  std::vector<std::size_t> order(chips.size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Prng shuffle(mix_seed(mix_seed(config.seed, kShuffleSalt), static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const auto lr = static_cast<float>(config.rate_for_epoch(epoch));
    const auto mu = static_cast<float>(config.momentum);
    double loss_sum = 0.0;
    for (const std::size_t idx : order) {
      const LoadedChip& chip = chips[idx];
      ForwardBackwardResult fb = forward_backward(net, chip.image, chip.label, dropout_rng);
      if (!std::isfinite(fb.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", chip " + chip.id);
      }
      loss_sum += fb.loss;
      auto params = net.tensors();
      const auto grads = fb.grads.tensors();
      sgd_momentum_step(params, grads, result.momentum, lr, mu);
      for (const Tensor* p : params) {
        if (!p->all_finite()) {
          throw NumericError("non-finite parameters after epoch " + std::to_string(epoch) + ", chip " + chip.id);
        }
      }
    }

    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(chips.size());
    const bool at_interval = config.eval_every > 0 && epoch % config.eval_every == 0;
    const bool last = epoch == config.epochs;
    if ((at_interval || last) && eval_chips != nullptr && !eval_chips->empty()) {
      EvalOptions opts;
      opts.vote = config.vote;
      rec.eval_mean_iou = mean_target_iou(evaluate(net, *eval_chips, opts));
    }
    if (!config.checkpoint_dir.empty()) {
      if (at_interval) save_checkpoint((config.checkpoint_dir / checkpoint_name(epoch)).string(), net, &result.momentum);
      if (last) save_checkpoint((config.checkpoint_dir / kFinalCheckpoint).string(), net, &result.momentum);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log_file.is_open()) {
      char line[128];
      if (rec.eval_mean_iou) {
        std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.3f\n", rec.epoch, rec.mean_loss, *rec.eval_mean_iou, rec.seconds);
      } else {
        std::snprintf(line, sizeof line, "%d,%.6f,,%.3f\n", rec.epoch, rec.mean_loss, rec.seconds);
      }
      log_file << line << std::flush;
    }
    if (progress) progress(rec);
    result.log.push_back(rec);
  }
  result.params = std::move(net);
  return result;
}

TrainResult train(const TrainConfig& config, NetworkParams net, const DatasetManifest& dataset,
                  const DatasetManifest* eval_set, const TrainProgress& progress) {
  if (dataset.entries.empty()) throw InvalidArgument("dataset " + dataset.dir.string() + " has no chips");
  const int nc = net.config.num_classes;
  const auto chips = load_chips(dataset, nc);
  if (eval_set == nullptr) return train(config, std::move(net), chips, nullptr, progress);
  const auto eval_chips = load_chips(*eval_set, nc);
  return train(config, std::move(net), chips, &eval_chips, progress);
}

EvaluationReport evaluate(const NetworkParams& net, const std::vector<LoadedChip>& chips, const EvalOptions& options) {
  if (chips.empty()) throw InvalidArgument("evaluation set is empty");
  const int nc = net.config.num_classes;
  EvaluationReport report;
  report.naming = options.naming;
  ConfusionMatrix pixels(nc, kBackgroundClass);
  std::vector<std::pair<int, int>> votes;
  std::vector<double> ious;
  votes.reserve(chips.size());
  ious.reserve(chips.size());
  for (const auto& chip : chips) {
    chip.label.validate(nc);
    if (!is_target_class(chip.class_id)) {
      throw InvalidLabel("chip " + chip.id + " has class " + std::to_string(chip.class_id) + " outside 2..11");
    }
    Tensor probs;
    LabelImage pred;
    if (options.oracle_truth) {
      const std::size_t h = chip.label.height(), w = chip.label.width();
      probs = Tensor({static_cast<std::size_t>(nc), h, w}, 0.0f);
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) probs.at(static_cast<std::size_t>(chip.label.at(r, c) - 1), r, c) = 1.0f;
      }
      pred = chip.label;
    } else {
      ScoreMap p = predict_probabilities(net, chip.image);
      pred = argmax_labels(p.values);
      probs = std::move(p.values);
    }
    accumulate_pixel_confusion(pred, chip.label, pixels);
    votes.emplace_back(chip_classify(probs, options.vote), chip.class_id);
    ious.push_back(per_image_iou(pred, chip.label, chip.class_id));
  }
  report.pixel = build_report(pixels);
  report.chips = chip_confusion(votes);
  report.iou = iou_distribution(ious);
  report.chip_count = chips.size();
  return report;
}

EvaluationReport evaluate(const NetworkParams& net, const DatasetManifest& dataset, const EvalOptions& options) {
  if (dataset.entries.empty()) throw InvalidArgument("dataset " + dataset.dir.string() + " has no chips");
  EvaluationReport r = evaluate(net, load_chips(dataset, net.config.num_classes), options);
  r.excluded_count = dataset.exclusions.size();
  return r;
}

}  // namespace versnet
