#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/evaluation.hpp"
#include "oracles.hpp"

namespace hybridct {
namespace {

using oracle::pairwise_auc;

// Label vectors realizing a confusion matrix.
void expand(const ConfusionMatrix& cm, std::vector<int>& y_true, std::vector<int>& y_pred) {
  auto push = [&](std::int64_t n, int t, int p) {
    for (std::int64_t i = 0; i < n; ++i) {
      y_true.push_back(t);
      y_pred.push_back(p);
    }
  };
  push(cm.tp, 1, 1);
  push(cm.fn, 1, 0);
  push(cm.fp, 0, 1);
  push(cm.tn, 0, 0);
}

TEST(Confusion, CountsWithCovidPositive) {
  std::vector<int> y_true, y_pred;
  expand({182, 0, 4, 187}, y_true, y_pred);
  EXPECT_EQ(confusion(y_true, y_pred), (ConfusionMatrix{182, 0, 4, 187}));
  EXPECT_EQ(confusion(y_true, y_true), (ConfusionMatrix{186, 0, 0, 187}));
}

TEST(Confusion, RejectsBadInput) {
  const std::vector<int> a{1, 0, 1};
  const std::vector<int> b{1, 0};
  const std::vector<int> c{1, 2, 0};
  EXPECT_THROW(confusion(a, b), Error);
  EXPECT_THROW(confusion(a, c), Error);
}

TEST(Metrics, HybridTableValues) {
  const ConfusionMatrix cm{182, 0, 4, 187};
  EXPECT_DOUBLE_EQ(accuracy(cm), 369.0 / 373.0);
  EXPECT_EQ(format_percent(accuracy(cm)), "98.93");
  const auto per_class = class_metrics(cm);
  EXPECT_EQ(format_percent(per_class[0].precision.value), "100.00");
  EXPECT_EQ(format_percent(per_class[0].recall.value), "97.85");
  EXPECT_EQ(format_percent(per_class[0].f1.value), "98.91");
  EXPECT_EQ(format_percent(per_class[1].precision.value), "97.91");
  EXPECT_EQ(format_percent(per_class[1].recall.value), "100.00");
  EXPECT_EQ(per_class[0].support + per_class[1].support, 373);
  const auto w = weighted_metrics(per_class);
  EXPECT_EQ(format_percent(w.precision), "98.95");
  EXPECT_EQ(format_percent(w.f1), "98.93");
}

TEST(Metrics, BackboneExamples) {
  const ConfusionMatrix vgg{161, 18, 25, 169};
  EXPECT_EQ(format_percent(accuracy(vgg)), "88.47");
  EXPECT_NEAR(precision(vgg).value, 161.0 / 179.0, 1e-15);
  EXPECT_NEAR(recall(vgg).value, 161.0 / 186.0, 1e-15);
  EXPECT_EQ(format_percent(recall({170, 11, 16, 176}).value), "91.40");
  const auto mobile = class_metrics(ConfusionMatrix{171, 7, 15, 180});
  EXPECT_NEAR(weighted_metrics(mobile).recall, 351.0 / 373.0, 1e-15);
}

TEST(Metrics, ZeroDenominatorIsFlagged) {
  const ConfusionMatrix none_predicted{0, 0, 5, 5};
  const Metric p = precision(none_predicted);
  EXPECT_TRUE(p.undefined);
  EXPECT_EQ(p.value, 0.0);
  EXPECT_TRUE(f1(none_predicted).undefined);
  EXPECT_FALSE(recall(none_predicted).undefined);
  EXPECT_THROW(accuracy(ConfusionMatrix{}), Error);
}

TEST(Metrics, F1EqualsPrecisionWhenRecallMatches) {
  const ConfusionMatrix cm{30, 10, 10, 50};
  EXPECT_NEAR(f1(cm).value, precision(cm).value, 1e-15);
}

TEST(Metrics, FlippedClassUsesNegativeCounts) {
  const ConfusionMatrix cm{40, 7, 9, 44};
  const auto per_class = class_metrics(cm);
  EXPECT_DOUBLE_EQ(per_class[1].precision.value, 44.0 / 53.0);
  EXPECT_DOUBLE_EQ(per_class[1].recall.value, 44.0 / 51.0);
}

TEST(Metrics, WeightedAverage) {
  const std::vector<double> f1s{0.9891, 0.9894};
  const std::vector<std::int64_t> supports{186, 187};
  EXPECT_EQ(format_percent(weighted_average(f1s, supports)), "98.93");
  const std::vector<double> v{0.2, 0.6};
  const std::vector<std::int64_t> equal{5, 5};
  EXPECT_DOUBLE_EQ(weighted_average(v, equal), 0.4);
  const std::vector<std::int64_t> zero{0, 0};
  EXPECT_THROW(weighted_average(v, zero), Error);
}

TEST(Metrics, WeightedRecallEqualsAccuracy) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> count(0, 200);
  for (int trial = 0; trial < 500; ++trial) {
    const ConfusionMatrix cm{count(gen) + 1, count(gen), count(gen), count(gen) + 1};
    EXPECT_NEAR(weighted_metrics(class_metrics(cm)).recall, accuracy(cm), 1e-12);
  }
}

TEST(Roc, HandEnumeratedExample) {
  const std::vector<int> y{1, 1, 0, 0};
  const std::vector<double> s{0.9, 0.4, 0.1, 0.6};
  const auto roc = roc_curve(y, s);
  ASSERT_EQ(roc.size(), 5u);
  EXPECT_TRUE(std::isinf(roc[0].threshold));
  EXPECT_EQ(roc[0].fpr, 0.0);
  EXPECT_EQ(roc[0].tpr, 0.0);
  EXPECT_EQ(roc[2].threshold, 0.6);
  EXPECT_EQ(roc[2].fpr, 0.5);
  EXPECT_EQ(roc[2].tpr, 0.5);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
  EXPECT_DOUBLE_EQ(auc(roc), 0.75);
}

TEST(Roc, DegenerateScores) {
  const std::vector<int> y{1, 0, 1, 0};
  const std::vector<double> same(4, 0.3);
  const auto flat = roc_curve(y, same);
  ASSERT_EQ(flat.size(), 2u);
  EXPECT_EQ(flat[1].fpr, 1.0);
  EXPECT_EQ(flat[1].tpr, 1.0);
  EXPECT_DOUBLE_EQ(auc(flat), 0.5);

  const std::vector<double> perfect{1, 0, 1, 0};
  const auto roc = roc_curve(y, perfect);
  bool corner = false;
  for (const auto& p : roc) corner |= p.fpr == 0.0 && p.tpr == 1.0;
  EXPECT_TRUE(corner);
  EXPECT_DOUBLE_EQ(auc(roc), 1.0);
}

TEST(Roc, SingleClassRejected) {
  const std::vector<int> y{1, 1};
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(roc_curve(y, s), Error);
}

TEST(Auc, MatchesPairwiseStatisticWithTies) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 400)(gen);
    // Coarse scores force ties.
    const int levels = std::uniform_int_distribution<int>(2, 30)(gen);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(gen() % 2);
      s[i] = static_cast<double>(static_cast<int>(gen() % levels) + 3 * y[i]) / levels;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_NEAR(auc(y, s), pairwise_auc(y, s), 1e-9);
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    EXPECT_NEAR(auc(y, t), auc(y, s), 1e-12);
  }
}

TEST(Report, TableRowAndJsonRoundTrip) {
  const std::vector<int> y{1, 1, 1, 0, 0};
  const std::vector<int> p{1, 1, 0, 0, 0};
  const std::vector<double> s{0.9, 0.8, 0.3, 0.2, 0.35};
  EvalReport r = make_report("Demo", y, p, s, "abc123");
  r.metadata["note"] = "x";
  const EvalReport back = report_from_json(report_to_json(r));
  EXPECT_EQ(back.model, r.model);
  EXPECT_EQ(back.confusion, r.confusion);
  EXPECT_EQ(back.accuracy, r.accuracy);
  EXPECT_EQ(back.weighted.precision, r.weighted.precision);
  EXPECT_EQ(back.weighted.f1, r.weighted.f1);
  EXPECT_EQ(back.auc, r.auc);
  ASSERT_EQ(back.roc.size(), r.roc.size());
  for (std::size_t i = 0; i < r.roc.size(); ++i) {
    EXPECT_EQ(back.roc[i].threshold, r.roc[i].threshold);
    EXPECT_EQ(back.roc[i].tpr, r.roc[i].tpr);
  }
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(back.per_class[c].f1.value, r.per_class[c].f1.value);
    EXPECT_EQ(back.per_class[c].support, r.per_class[c].support);
  }
  EXPECT_EQ(back.metadata, r.metadata);
  EXPECT_EQ(back.config_hash, "abc123");

  const EvalReport hybrid = report_from_confusion("Hybrid", {182, 0, 4, 187});
  EXPECT_NE(render_tables(std::span(&hybrid, 1)).find("98.93 / 98.95 / 98.93 / 98.93"), std::string::npos);
}

TEST(Report, RendersAllFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "hybridct_report_test";
  std::filesystem::remove_all(dir);
  const std::vector<int> y{1, 0, 1, 0};
  const std::vector<double> s{0.8, 0.1, 0.6, 0.7};
  const std::vector<int> p{1, 0, 1, 1};
  const EvalReport r = make_report("Demo", y, p, s);
  render_report(r, dir);
  for (const char* f : {"metrics.txt", "confusion_matrix.svg", "roc.svg", "report.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_NE(io::read_text_file(dir / "roc.svg").find("AUC = 0.750"), std::string::npos);

  EvalReport empty = r;
  empty.roc.clear();
  EXPECT_THROW(render_report(empty, dir), Error);
  std::filesystem::remove_all(dir);
}

TEST(Report, UnwritableDirectory) {
  const std::vector<int> y{1, 0};
  const std::vector<double> s{0.8, 0.1};
  const EvalReport r = make_report("Demo", y, y, s);
  try {
    render_report(r, "/proc/hybridct_cannot_write_here");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Format, HalfUpRounding) {
  EXPECT_EQ(format_percent(0.98925), "98.93");
  EXPECT_EQ(format_percent(0.989249), "98.92");
  EXPECT_EQ(format_percent(1.0), "100.00");
  EXPECT_EQ(format_percent(0.0), "0.00");
}

}  // namespace
}  // namespace hybridct
