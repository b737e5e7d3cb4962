#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "versnet/maps.hpp"

namespace versnet {

/// Square count matrix over class ids first_class .. first_class + n - 1.
/// Rows are predicted classes, columns are actual classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes, int first_class = 1);

  int num_classes() const noexcept { return n_; }
  int first_class() const noexcept { return first_; }
  bool contains(int class_id) const noexcept { return class_id >= first_ && class_id < first_ + n_; }

  std::uint64_t at(int predicted, int actual) const;
  void add(int predicted, int actual, std::uint64_t count = 1);

  std::uint64_t total() const;
  std::uint64_t row_sum(int predicted) const;
  std::uint64_t col_sum(int actual) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

  /// Builds from row-major counts (rows predicted, columns actual).
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows, int first_class = 1);

 private:
  std::size_t index(int predicted, int actual) const;

  int n_ = 0;
  int first_ = 1;
  std::vector<std::uint64_t> counts_;
};

void accumulate_pixel_confusion(const LabelImage& predicted, const LabelImage& truth, ConfusionMatrix& cm);

struct BinaryCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  friend bool operator==(const BinaryCounts&, const BinaryCounts&) = default;
};

BinaryCounts binary_counts(const ConfusionMatrix& cm, int class_id);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  std::uint64_t support = 0;  // actual-class count
  bool present = false;       // support > 0
};

/// precision = tp/(tp+fp), recall = tp/(tp+fn), f1 = 2pr/(p+r),
/// iou = tp/(tp+fp+fn). A class with tp = fp = fn = 0 gets 1 everywhere and
/// present = false; other zero denominators give 0.
ClassMetrics class_metrics(const BinaryCounts& bc);

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  int classes = 0;  // number of classes averaged
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;  // index = class id - first_class
  AverageMetrics average_all;           // over every class present in the ground truth
  AverageMetrics average_targets;       // over present target classes 2..11
  ConfusionMatrix pixel_confusion;

  const ClassMetrics& for_class(int class_id) const;
};

MetricsReport build_report(const ConfusionMatrix& cm);

enum class ChipVoteRule {
  /// Per-pixel argmax over every class; majority among pixels whose winner is
  /// a target class, falling back to summed target probability.
  ArgmaxAllClasses,
  /// Per-pixel argmax restricted to the ten target classes, then majority.
  ArgmaxTargetClasses,
};

/// Chip-level class in {2..11} from a probability map with >= 11 channels.
int chip_classify(const Tensor& probabilities, ChipVoteRule rule = ChipVoteRule::ArgmaxAllClasses);

struct ChipAccuracy {
  ConfusionMatrix confusion;                         // 10 x 10 over ids 2..11
  std::vector<std::optional<double>> per_class;      // diagonal / column sum; empty when no actual chips
  double average = 0.0;                              // mean over classes with chips
  double overall = 0.0;                              // trace / total
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
};

/// predictions: (predicted, actual) target class pairs.
ChipAccuracy chip_confusion(const std::vector<std::pair<int, int>>& predictions);
ChipAccuracy chip_accuracy(const ConfusionMatrix& confusion);

double per_image_iou(const LabelImage& predicted, const LabelImage& truth, int true_class);

struct IoUDistribution {
  static constexpr int kBins = 20;
  static constexpr double kBinWidth = 0.05;

  std::vector<double> sorted;  // ascending
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<std::uint64_t> histogram = std::vector<std::uint64_t>(kBins, 0);

  /// Right-continuous empirical CDF, P(IoU <= t).
  double ecdf(double t) const;
};

IoUDistribution iou_distribution(const std::vector<double>& values);

enum class ClassNaming { Synthetic, Mstar };

std::string class_name(int class_id, ClassNaming naming);
std::string naming_to_string(ClassNaming naming);
ClassNaming naming_from_string(const std::string& s);

/// Everything an evaluation run reports.
struct EvaluationReport {
  ClassNaming naming = ClassNaming::Synthetic;
  MetricsReport pixel;
  std::optional<ChipAccuracy> chips;
  std::optional<IoUDistribution> iou;
  std::uint64_t chip_count = 0;
  std::uint64_t excluded_count = 0;
};

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& json);

/// CSV with a header row and header column of class names.
std::string confusion_to_csv(const ConfusionMatrix& cm, ClassNaming naming);
std::string iou_histogram_csv(const IoUDistribution& dist);
std::string iou_ecdf_csv(const IoUDistribution& dist);

/// Per-class precision/recall/F1/IoU table with both averages.
std::string render_report_text(const EvaluationReport& report);
std::string render_report_csv(const EvaluationReport& report);

}  // namespace versnet
