#include "versnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "versnet/errors.hpp"

namespace versnet {

using nlohmann::json;

// ---------------------------------------------------------------- ConfusionMatrix

ConfusionMatrix::ConfusionMatrix(int num_classes, int first_class)
    : n_(num_classes), first_(first_class), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw InvalidArgument("confusion matrix needs at least one class");
}

std::size_t ConfusionMatrix::index(int predicted, int actual) const {
  if (!contains(predicted) || !contains(actual)) {
    throw InvalidLabel("class pair (" + std::to_string(predicted) + "," + std::to_string(actual) +
                       ") outside confusion matrix range");
  }
  return static_cast<std::size_t>(predicted - first_) * n_ + static_cast<std::size_t>(actual - first_);
}

std::uint64_t ConfusionMatrix::at(int predicted, int actual) const { return counts_[index(predicted, actual)]; }

void ConfusionMatrix::add(int predicted, int actual, std::uint64_t count) { counts_[index(predicted, actual)] += count; }

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(int predicted) const {
  std::uint64_t s = 0;
  for (int a = first_; a < first_ + n_; ++a) s += at(predicted, a);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int actual) const {
  std::uint64_t s = 0;
  for (int p = first_; p < first_ + n_; ++p) s += at(p, actual);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (n_ != other.n_ || first_ != other.first_) throw ShapeError("confusion matrix layout mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows, int first_class) {
  ConfusionMatrix cm(static_cast<int>(rows.size()), first_class);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw ShapeError("confusion matrix rows must be square");
    for (std::size_t c = 0; c < rows.size(); ++c) {
      cm.add(first_class + static_cast<int>(r), first_class + static_cast<int>(c), rows[r][c]);
    }
  }
  return cm;
}

void accumulate_pixel_confusion(const LabelImage& predicted, const LabelImage& truth, ConfusionMatrix& cm) {
  if (predicted.height() != truth.height() || predicted.width() != truth.width()) {
    throw ShapeError("accumulate_pixel_confusion: prediction and truth differ in size");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(predicted[i], truth[i]);
}

// ---------------------------------------------------------------- per-class metrics

BinaryCounts binary_counts(const ConfusionMatrix& cm, int class_id) {
  if (!cm.contains(class_id)) throw InvalidArgument("class " + std::to_string(class_id) + " not in matrix");
  BinaryCounts bc;
  bc.tp = cm.at(class_id, class_id);
  bc.fp = cm.row_sum(class_id) - bc.tp;
  bc.fn = cm.col_sum(class_id) - bc.tp;
  bc.tn = cm.total() - bc.tp - bc.fp - bc.fn;
  return bc;
}

ClassMetrics class_metrics(const BinaryCounts& bc) {
  ClassMetrics m;
  m.support = bc.tp + bc.fn;
  m.present = m.support > 0;
  if (bc.tp + bc.fp + bc.fn == 0) {
    m.precision = m.recall = m.f1 = m.iou = 1.0;
    return m;
  }
  const auto tp = static_cast<double>(bc.tp);
  m.precision = bc.tp + bc.fp > 0 ? tp / static_cast<double>(bc.tp + bc.fp) : 0.0;
  m.recall = bc.tp + bc.fn > 0 ? tp / static_cast<double>(bc.tp + bc.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.iou = tp / static_cast<double>(bc.tp + bc.fp + bc.fn);
  return m;
}

const ClassMetrics& MetricsReport::for_class(int class_id) const {
  const int idx = class_id - pixel_confusion.first_class();
  if (idx < 0 || idx >= static_cast<int>(per_class.size())) {
    throw InvalidArgument("class " + std::to_string(class_id) + " not in report");
  }
  return per_class[static_cast<std::size_t>(idx)];
}

MetricsReport build_report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.pixel_confusion = cm;
  const int first = cm.first_class();
  for (int c = first; c < first + cm.num_classes(); ++c) {
    r.per_class.push_back(class_metrics(binary_counts(cm, c)));
  }
  auto add = [](AverageMetrics& a, const ClassMetrics& m) {
    a.precision += m.precision;
    a.recall += m.recall;
    a.f1 += m.f1;
    a.iou += m.iou;
    ++a.classes;
  };
  auto finish = [](AverageMetrics& a) {
    if (a.classes == 0) return;
    a.precision /= a.classes;
    a.recall /= a.classes;
    a.f1 /= a.classes;
    a.iou /= a.classes;
  };
  for (int c = first; c < first + cm.num_classes(); ++c) {
    const auto& m = r.per_class[static_cast<std::size_t>(c - first)];
    if (!m.present) continue;
    add(r.average_all, m);
    if (is_target_class(c)) add(r.average_targets, m);
  }
  finish(r.average_all);
  finish(r.average_targets);
  return r;
}

// ---------------------------------------------------------------- chip classification

int chip_classify(const Tensor& probabilities, ChipVoteRule rule) {
  if (probabilities.rank() != 3 || probabilities.channels() < static_cast<std::size_t>(kLastTargetClass)) {
    throw ShapeError("chip_classify needs a score map with at least 11 class channels");
  }
  const std::size_t nc = probabilities.channels();
  const std::size_t hw = probabilities.height() * probabilities.width();
  std::array<std::uint64_t, kNumTargetClasses> votes{};
  std::array<double, kNumTargetClasses> mass{};
  const std::size_t k_lo = rule == ChipVoteRule::ArgmaxAllClasses ? 0 : kFirstTargetClass - 1;
  const std::size_t k_hi = rule == ChipVoteRule::ArgmaxAllClasses ? nc : kLastTargetClass;
  for (std::size_t i = 0; i < hw; ++i) {
    std::size_t best = k_lo;
    for (std::size_t k = k_lo + 1; k < k_hi; ++k) {
      if (probabilities[k * hw + i] > probabilities[best * hw + i]) best = k;
    }
    const int cls = static_cast<int>(best) + 1;
    if (is_target_class(cls)) ++votes[static_cast<std::size_t>(cls - kFirstTargetClass)];
    for (std::size_t t = 0; t < kNumTargetClasses; ++t) {
      mass[t] += probabilities[(t + kFirstTargetClass - 1) * hw + i];
    }
  }
  const auto top_vote = std::max_element(votes.begin(), votes.end());
  if (*top_vote > 0) return kFirstTargetClass + static_cast<int>(top_vote - votes.begin());
  const auto top_mass = std::max_element(mass.begin(), mass.end());
  return kFirstTargetClass + static_cast<int>(top_mass - mass.begin());
}

ChipAccuracy chip_accuracy(const ConfusionMatrix& confusion) {
  if (confusion.total() == 0) throw InvalidArgument("chip accuracy of an empty chip set");
  ChipAccuracy acc;
  acc.confusion = confusion;
  acc.total = confusion.total();
  double sum = 0.0;
  int classes = 0;
  for (int c = confusion.first_class(); c < confusion.first_class() + confusion.num_classes(); ++c) {
    const std::uint64_t col = confusion.col_sum(c);
    const std::uint64_t hit = confusion.at(c, c);
    acc.correct += hit;
    if (col == 0) {
      acc.per_class.emplace_back(std::nullopt);
      continue;
    }
    const double a = static_cast<double>(hit) / static_cast<double>(col);
    acc.per_class.emplace_back(a);
    sum += a;
    ++classes;
  }
  acc.average = sum / classes;
  acc.overall = static_cast<double>(acc.correct) / static_cast<double>(acc.total);
  return acc;
}

ChipAccuracy chip_confusion(const std::vector<std::pair<int, int>>& predictions) {
  if (predictions.empty()) throw InvalidArgument("chip_confusion: no predictions");
  ConfusionMatrix cm(kNumTargetClasses, kFirstTargetClass);
  for (const auto& [pred, actual] : predictions) {
    if (!is_target_class(pred) || !is_target_class(actual)) {
      throw InvalidLabel("chip classes must be target ids 2..11");
    }
    cm.add(pred, actual);
  }
  return chip_accuracy(cm);
}

// ---------------------------------------------------------------- IoU distribution

double per_image_iou(const LabelImage& predicted, const LabelImage& truth, int true_class) {
  if (!is_target_class(true_class)) throw InvalidArgument("per_image_iou: class must be a target id 2..11");
  if (predicted.height() != truth.height() || predicted.width() != truth.width()) {
    throw ShapeError("per_image_iou: prediction and truth differ in size");
  }
  std::uint64_t inter = 0, uni = 0, actual = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == true_class;
    const bool t = truth[i] == true_class;
    inter += p && t;
    uni += p || t;
    actual += t;
  }
  if (actual == 0) {
    throw InvalidArgument("per_image_iou: truth has no pixel of class " + std::to_string(true_class));
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double IoUDistribution::ecdf(double t) const {
  if (sorted.empty()) return 0.0;
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

IoUDistribution iou_distribution(const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("iou_distribution: no values");
  IoUDistribution d;
  d.sorted = values;
  std::sort(d.sorted.begin(), d.sorted.end());
  if (d.sorted.front() < 0.0 || d.sorted.back() > 1.0) {
    throw InvalidArgument("iou_distribution: values must lie in [0, 1]");
  }
  double sum = 0.0;
  for (double v : d.sorted) sum += v;
  d.mean = sum / static_cast<double>(d.sorted.size());
  double ss = 0.0;
  for (double v : d.sorted) ss += (v - d.mean) * (v - d.mean);
  d.stddev = std::sqrt(ss / static_cast<double>(d.sorted.size()));
  for (double v : d.sorted) {
    const int bin = std::min(IoUDistribution::kBins - 1, static_cast<int>(std::floor(v / IoUDistribution::kBinWidth + 1e-12)));
    ++d.histogram[static_cast<std::size_t>(bin)];
  }
  return d;
}

// ---------------------------------------------------------------- naming

namespace {

constexpr std::array<const char*, kNumTargetClasses> kMstarNames = {
    "2S1", "BMP2", "BRDM2", "BTR60", "BTR70", "D7", "T62", "T72", "ZIL131", "ZSU234"};

}  // namespace

std::string class_name(int class_id, ClassNaming naming) {
  if (class_id == kBackgroundClass) return "Background";
  if (class_id == kFrontClass) return "Front";
  if (is_target_class(class_id)) {
    const int t = class_id - kFirstTargetClass;
    if (naming == ClassNaming::Mstar) return kMstarNames[static_cast<std::size_t>(t)];
    char buf[8];
    std::snprintf(buf, sizeof buf, "T%02d", t + 1);
    return buf;
  }
  return "C" + std::to_string(class_id);
}

std::string naming_to_string(ClassNaming naming) {
  return naming == ClassNaming::Mstar ? "mstar" : "synthetic";
}

ClassNaming naming_from_string(const std::string& s) {
  if (s == "mstar") return ClassNaming::Mstar;
  if (s == "synthetic") return ClassNaming::Synthetic;
  throw SchemaError("unknown class naming '" + s + "'");
}

// ---------------------------------------------------------------- serialization

namespace {

json confusion_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (int p = cm.first_class(); p < cm.first_class() + cm.num_classes(); ++p) {
    json row = json::array();
    for (int a = cm.first_class(); a < cm.first_class() + cm.num_classes(); ++a) row.push_back(cm.at(p, a));
    rows.push_back(std::move(row));
  }
  return json{{"first_class", cm.first_class()}, {"rows", std::move(rows)}};
}

ConfusionMatrix confusion_from_json(const json& j) {
  return ConfusionMatrix::from_rows(j.at("rows").get<std::vector<std::vector<std::uint64_t>>>(),
                                    j.at("first_class").get<int>());
}

json average_json(const AverageMetrics& a) {
  return json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}, {"iou", a.iou}, {"classes", a.classes}};
}

}  // namespace

std::string report_to_json(const EvaluationReport& report) {
  json classes = json::array();
  const auto& cm = report.pixel.pixel_confusion;
  for (std::size_t i = 0; i < report.pixel.per_class.size(); ++i) {
    const int id = cm.first_class() + static_cast<int>(i);
    const auto& m = report.pixel.per_class[i];
    classes.push_back(json{{"id", id},
                           {"name", class_name(id, report.naming)},
                           {"precision", m.precision},
                           {"recall", m.recall},
                           {"f1", m.f1},
                           {"iou", m.iou},
                           {"support", m.support},
                           {"present", m.present}});
  }
  json j;
  j["naming"] = naming_to_string(report.naming);
  j["chip_count"] = report.chip_count;
  j["excluded_count"] = report.excluded_count;
  j["pixel"] = json{{"classes", std::move(classes)},
                    {"average_all", average_json(report.pixel.average_all)},
                    {"average_targets", average_json(report.pixel.average_targets)},
                    {"confusion", confusion_json(cm)}};
  if (report.chips) {
    const auto& c = *report.chips;
    json per = json::array();
    for (std::size_t i = 0; i < c.per_class.size(); ++i) {
      const int id = c.confusion.first_class() + static_cast<int>(i);
      per.push_back(json{{"id", id},
                         {"name", class_name(id, report.naming)},
                         {"accuracy", c.per_class[i] ? json(*c.per_class[i]) : json(nullptr)}});
    }
    j["chips"] = json{{"per_class", std::move(per)},
                      {"average", c.average},
                      {"overall", c.overall},
                      {"correct", c.correct},
                      {"total", c.total},
                      {"confusion", confusion_json(c.confusion)}};
  }
  if (report.iou) {
    const auto& d = *report.iou;
    j["iou_distribution"] = json{{"count", d.sorted.size()},
                                 {"mean", d.mean},
                                 {"stddev", d.stddev},
                                 {"bin_width", IoUDistribution::kBinWidth},
                                 {"histogram", d.histogram},
                                 {"p_le_0_5", d.ecdf(0.5)},
                                 {"p_le_0_9", d.ecdf(0.9)},
                                 {"values", d.sorted}};
  }
  return j.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report JSON: ") + e.what(), e.byte);
  }
  try {
    EvaluationReport r;
    r.naming = naming_from_string(j.at("naming").get<std::string>());
    r.chip_count = j.value("chip_count", std::uint64_t{0});
    r.excluded_count = j.value("excluded_count", std::uint64_t{0});
    r.pixel = build_report(confusion_from_json(j.at("pixel").at("confusion")));
    if (j.contains("chips")) r.chips = chip_accuracy(confusion_from_json(j["chips"].at("confusion")));
    if (j.contains("iou_distribution")) {
      r.iou = iou_distribution(j["iou_distribution"].at("values").get<std::vector<double>>());
    }
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report JSON: ") + e.what());
  }
}

std::string confusion_to_csv(const ConfusionMatrix& cm, ClassNaming naming) {
  std::ostringstream os;
  os << "predicted\\actual";
  for (int a = cm.first_class(); a < cm.first_class() + cm.num_classes(); ++a) os << ',' << class_name(a, naming);
  os << '\n';
  for (int p = cm.first_class(); p < cm.first_class() + cm.num_classes(); ++p) {
    os << class_name(p, naming);
    for (int a = cm.first_class(); a < cm.first_class() + cm.num_classes(); ++a) os << ',' << cm.at(p, a);
    os << '\n';
  }
  return os.str();
}

std::string iou_histogram_csv(const IoUDistribution& dist) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count\n";
  char buf[64];
  for (int b = 0; b < IoUDistribution::kBins; ++b) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f,", b * IoUDistribution::kBinWidth, (b + 1) * IoUDistribution::kBinWidth);
    os << buf << dist.histogram[static_cast<std::size_t>(b)] << '\n';
  }
  return os.str();
}

std::string iou_ecdf_csv(const IoUDistribution& dist) {
  std::ostringstream os;
  os << "iou,cumulative_fraction\n";
  char buf[64];
  const double n = static_cast<double>(dist.sorted.size());
  for (std::size_t i = 0; i < dist.sorted.size(); ++i) {
    // Emit only the last occurrence of repeated values; the ECDF is right-continuous.
    if (i + 1 < dist.sorted.size() && dist.sorted[i + 1] == dist.sorted[i]) continue;
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", dist.sorted[i], static_cast<double>(i + 1) / n);
    os << buf;
  }
  return os.str();
}

std::string render_report_text(const EvaluationReport& report) {
  std::ostringstream os;
  char buf[160];
  const auto& px = report.pixel;
  const auto& cm = px.pixel_confusion;
  std::snprintf(buf, sizeof buf, "%-16s %9s %7s %7s %7s %12s\n", "Class", "Precision", "Recall", "F1", "IoU", "Support");
  os << buf;
  for (std::size_t i = 0; i < px.per_class.size(); ++i) {
    const int id = cm.first_class() + static_cast<int>(i);
    const auto& m = px.per_class[i];
    std::snprintf(buf, sizeof buf, "%-16s %9.3f %7.3f %7.3f %7.3f %12llu%s\n", class_name(id, report.naming).c_str(),
                  m.precision, m.recall, m.f1, m.iou, static_cast<unsigned long long>(m.support),
                  m.present ? "" : "  (absent)");
    os << buf;
  }
  auto avg_line = [&](const std::string& label, const AverageMetrics& a) {
    std::snprintf(buf, sizeof buf, "%-16s %9.3f %7.3f %7.3f %7.3f\n", label.c_str(), a.precision, a.recall, a.f1, a.iou);
    os << buf;
  };
  avg_line("Average of " + std::to_string(px.average_all.classes), px.average_all);
  avg_line("Average of " + std::to_string(px.average_targets.classes), px.average_targets);
  if (report.chips) {
    const auto& c = *report.chips;
    os << "\nChip classification accuracy (%)\n";
    for (std::size_t i = 0; i < c.per_class.size(); ++i) {
      const int id = c.confusion.first_class() + static_cast<int>(i);
      if (c.per_class[i]) {
        std::snprintf(buf, sizeof buf, "%-16s %7.2f\n", class_name(id, report.naming).c_str(), 100.0 * *c.per_class[i]);
      } else {
        std::snprintf(buf, sizeof buf, "%-16s %7s\n", class_name(id, report.naming).c_str(), "-");
      }
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-16s %7.2f\n%-16s %7.2f (%llu/%llu)\n", "Average", 100.0 * c.average, "Overall",
                  100.0 * c.overall, static_cast<unsigned long long>(c.correct), static_cast<unsigned long long>(c.total));
    os << buf;
  }
  if (report.iou) {
    const auto& d = *report.iou;
    std::snprintf(buf, sizeof buf, "\nPer-image IoU: n=%zu mean=%.3f stddev=%.3f P(IoU<=0.5)=%.3f P(IoU<=0.9)=%.3f\n",
                  d.sorted.size(), d.mean, d.stddev, d.ecdf(0.5), d.ecdf(0.9));
    os << buf;
  }
  return os.str();
}

std::string render_report_csv(const EvaluationReport& report) {
  std::ostringstream os;
  char buf[160];
  os << "class,precision,recall,f1,iou,support,present\n";
  const auto& px = report.pixel;
  for (std::size_t i = 0; i < px.per_class.size(); ++i) {
    const int id = px.pixel_confusion.first_class() + static_cast<int>(i);
    const auto& m = px.per_class[i];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%llu,%d\n", class_name(id, report.naming).c_str(), m.precision,
                  m.recall, m.f1, m.iou, static_cast<unsigned long long>(m.support), m.present ? 1 : 0);
    os << buf;
  }
  auto avg_line = [&](const char* label, const AverageMetrics& a) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,,\n", label, a.precision, a.recall, a.f1, a.iou);
    os << buf;
  };
  avg_line("average_all", px.average_all);
  avg_line("average_targets", px.average_targets);
  return os.str();
}

}  // namespace versnet
