#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridct/data_ingest.hpp"

namespace hybridct {

// Counts with COVID (label 1) as the positive class.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  // Same predictions viewed with NONCOVID as the positive class.
  ConfusionMatrix flipped() const { return {tn, fn, fp, tp}; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

// A ratio whose denominator may be zero; it is then reported as 0 and
// flagged rather than propagated as NaN.
struct Metric {
  double value = 0.0;
  bool undefined = false;
};

double accuracy(const ConfusionMatrix& cm);
Metric precision(const ConfusionMatrix& cm);
Metric recall(const ConfusionMatrix& cm);
Metric f1(const ConfusionMatrix& cm);

struct ClassMetrics {
  Label label = Label::kCovid;
  Metric precision, recall, f1;
  std::int64_t support = 0;
};

// {COVID, NONCOVID}; NONCOVID metrics treat NONCOVID as the positive class.
std::array<ClassMetrics, 2> class_metrics(const ConfusionMatrix& cm);
std::array<ClassMetrics, 2> class_metrics(std::span<const int> y_true, std::span<const int> y_pred);

// Support-weighted mean: sum(value_i * n_i) / sum(n_i).
double weighted_average(std::span<const double> values, std::span<const std::int64_t> supports);

struct WeightedMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

WeightedMetrics weighted_metrics(const std::array<ClassMetrics, 2>& per_class);

struct RocPoint {
  double threshold = 0.0;  // predict COVID when score >= threshold
  double tpr = 0.0;
  double fpr = 0.0;
};

// Thresholds: +infinity, then every distinct score in descending order.
std::vector<RocPoint> roc_curve(std::span<const int> y_true, std::span<const double> scores);
// Trapezoidal area under TPR(FPR).
double auc(std::span<const RocPoint> roc);
double auc(std::span<const int> y_true, std::span<const double> scores);

struct EvalReport {
  std::string model;
  ConfusionMatrix confusion;
  std::array<ClassMetrics, 2> per_class;
  double accuracy = 0.0;
  WeightedMetrics weighted;
  std::vector<RocPoint> roc;
  std::optional<double> auc;
  std::string config_hash;
  std::map<std::string, std::string> metadata;
};

EvalReport make_report(std::string model, std::span<const int> y_true, std::span<const int> y_pred,
                       std::span<const double> scores, std::string config_hash = {});
// Metrics only; no ROC.
EvalReport report_from_confusion(std::string model, const ConfusionMatrix& cm);

// Percentage with two decimals, rounded half up: 0.989276 -> "98.93".
std::string format_percent(double fraction);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text, const std::string& source = "report");

// Accuracy / weighted precision / recall / F1 per model, then the per-class
// breakdown.
std::string render_tables(std::span<const EvalReport> reports);
std::string confusion_svg(const EvalReport& report);
std::string roc_svg(std::span<const EvalReport> reports);

// Writes metrics.txt, confusion_matrix.svg, roc.svg and report.json.
void render_report(const EvalReport& report, const std::filesystem::path& out_dir);
// Writes comparison.txt and roc_comparison.svg for several models.
void render_comparison(std::span<const EvalReport> reports, const std::filesystem::path& out_dir);

}  // namespace hybridct
