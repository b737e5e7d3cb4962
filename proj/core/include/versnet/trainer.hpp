#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "versnet/maps.hpp"
#include "versnet/metrics.hpp"
#include "versnet/network.hpp"
#include "versnet/synthdata.hpp"

namespace versnet {

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int epochs = 1;
  std::uint64_t seed = 0;
  int eval_every = 0;  // 0: checkpoint and evaluate only at the end
  std::filesystem::path checkpoint_dir;  // empty: no files written
  double lr_decay = 1.0;  // multiply the rate by this every lr_decay_every epochs
  int lr_decay_every = 0;
  ChipVoteRule vote = ChipVoteRule::ArgmaxAllClasses;

  /// A zero learning rate is accepted and turns every step into a no-op.
  void validate() const;
  double rate_for_epoch(int epoch) const;
};

struct TrainLogRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> eval_mean_iou;  // mean target-class pixel IoU on the eval set
  double seconds = 0.0;
};

inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kFinalCheckpoint = "final.vnck";

/// One chip held in memory.
struct LoadedChip {
  std::string id;
  int class_id = kFirstTargetClass;
  SarImage image;
  LabelImage label;
};

/// Reads every chip of a manifest. Unreadable files raise IoError naming the
/// file; labels outside 1..num_classes raise InvalidLabel.
std::vector<LoadedChip> load_chips(const DatasetManifest& manifest, int num_classes = kDefaultNumClasses);

struct TrainResult {
  NetworkParams params;
  MomentumState momentum;
  std::vector<TrainLogRecord> log;
};

using TrainProgress = std::function<void(const TrainLogRecord&)>;

/// Per-chip SGD with momentum. Epoch e visits the chips in an order drawn
/// from (seed, e); dropout draws from a stream derived from seed.
TrainResult train(const TrainConfig& config, NetworkParams net, const std::vector<LoadedChip>& chips,
                  const std::vector<LoadedChip>* eval_chips = nullptr, const TrainProgress& progress = {});
TrainResult train(const TrainConfig& config, NetworkParams net, const DatasetManifest& dataset,
                  const DatasetManifest* eval_set = nullptr, const TrainProgress& progress = {});

struct EvalOptions {
  ChipVoteRule vote = ChipVoteRule::ArgmaxAllClasses;
  ClassNaming naming = ClassNaming::Synthetic;
  bool oracle_truth = false;  // use the truth labels as predictions
};

/// Eval-mode prediction on every chip: pixel confusion and metrics,
/// majority-vote chip accuracy and per-chip IoU of the true class.
EvaluationReport evaluate(const NetworkParams& net, const std::vector<LoadedChip>& chips, const EvalOptions& options = {});
EvaluationReport evaluate(const NetworkParams& net, const DatasetManifest& dataset, const EvalOptions& options = {});

}  // namespace versnet
