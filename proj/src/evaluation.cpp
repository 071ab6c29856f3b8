#include "hybridct/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/json_io.hpp"

namespace hybridct {

namespace fs = std::filesystem;

namespace {

void check_binary(std::span<const int> labels, const char* what) {
  for (int v : labels) {
    require(v == 0 || v == 1, ErrorCode::kInput, std::string(what) + " labels must be 0 or 1");
  }
}

Metric ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  require(y_true.size() == y_pred.size(), ErrorCode::kInput,
          "confusion: " + std::to_string(y_true.size()) + " labels but " +
              std::to_string(y_pred.size()) + " predictions");
  check_binary(y_true, "true");
  check_binary(y_pred, "predicted");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 1) {
      ++(y_pred[i] == 1 ? cm.tp : cm.fn);
    } else {
      ++(y_pred[i] == 1 ? cm.fp : cm.tn);
    }
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  require(cm.total() > 0, ErrorCode::kUndefinedMetric, "accuracy of an empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

Metric precision(const ConfusionMatrix& cm) { return ratio(cm.tp, cm.tp + cm.fp); }
Metric recall(const ConfusionMatrix& cm) { return ratio(cm.tp, cm.tp + cm.fn); }

Metric f1(const ConfusionMatrix& cm) {
  const Metric p = precision(cm);
  const Metric r = recall(cm);
  if (p.undefined || r.undefined || p.value + r.value == 0.0) return {0.0, true};
  return {2.0 * p.value * r.value / (p.value + r.value), false};
}

std::array<ClassMetrics, 2> class_metrics(const ConfusionMatrix& cm) {
  const ConfusionMatrix neg = cm.flipped();
  return {ClassMetrics{Label::kCovid, precision(cm), recall(cm), f1(cm), cm.tp + cm.fn},
          ClassMetrics{Label::kNonCovid, precision(neg), recall(neg), f1(neg), neg.tp + neg.fn}};
}

std::array<ClassMetrics, 2> class_metrics(std::span<const int> y_true, std::span<const int> y_pred) {
  return class_metrics(confusion(y_true, y_pred));
}

double weighted_average(std::span<const double> values, std::span<const std::int64_t> supports) {
  require(values.size() == supports.size(), ErrorCode::kInput,
          "weighted_average: values and supports differ in length");
  std::int64_t total = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(supports[i] >= 0, ErrorCode::kInput, "weighted_average: negative support");
    total += supports[i];
    sum += values[i] * static_cast<double>(supports[i]);
  }
  require(total > 0, ErrorCode::kUndefinedMetric, "weighted_average: total support is zero");
  return sum / static_cast<double>(total);
}

WeightedMetrics weighted_metrics(const std::array<ClassMetrics, 2>& per_class) {
  const std::array<std::int64_t, 2> n = {per_class[0].support, per_class[1].support};
  auto avg = [&](auto field) {
    const std::array<double, 2> v = {(per_class[0].*field).value, (per_class[1].*field).value};
    return weighted_average(v, n);
  };
  return {avg(&ClassMetrics::precision), avg(&ClassMetrics::recall), avg(&ClassMetrics::f1)};
}

std::vector<RocPoint> roc_curve(std::span<const int> y_true, std::span<const double> scores) {
  require(y_true.size() == scores.size(), ErrorCode::kInput, "roc_curve: labels and scores differ in length");
  check_binary(y_true, "true");
  std::int64_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(std::isfinite(scores[i]), ErrorCode::kInput, "roc_curve: non-finite score");
    pos += y_true[i];
  }
  const auto neg = static_cast<std::int64_t>(y_true.size()) - pos;
  require(pos > 0 && neg > 0, ErrorCode::kInput, "roc_curve needs both classes in y_true");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::int64_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double t = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == t; ++k) ++(y_true[order[k]] == 1 ? tp : fp);
    roc.push_back({t, static_cast<double>(tp) / static_cast<double>(pos),
                   static_cast<double>(fp) / static_cast<double>(neg)});
  }
  return roc;
}

double auc(std::span<const RocPoint> roc) {
  require(roc.size() >= 2, ErrorCode::kInput, "auc needs at least two ROC points");
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  }
  return area;
}

double auc(std::span<const int> y_true, std::span<const double> scores) {
  return auc(roc_curve(y_true, scores));
}

EvalReport make_report(std::string model, std::span<const int> y_true, std::span<const int> y_pred,
                       std::span<const double> scores, std::string config_hash) {
  EvalReport r = report_from_confusion(std::move(model), confusion(y_true, y_pred));
  r.roc = roc_curve(y_true, scores);
  r.auc = auc(r.roc);
  r.config_hash = std::move(config_hash);
  return r;
}

EvalReport report_from_confusion(std::string model, const ConfusionMatrix& cm) {
  EvalReport r;
  r.model = std::move(model);
  r.confusion = cm;
  r.per_class = class_metrics(cm);
  r.accuracy = accuracy(cm);
  r.weighted = weighted_metrics(r.per_class);
  return r;
}

std::string format_percent(double fraction) {
  // The small offset keeps decimal midpoints such as 0.98925 from rounding
  // down because of their binary representation.
  const double hundredths = std::floor(fraction * 10000.0 + 0.5 + 1e-7);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
  return buf;
}

namespace {

Json metric_json(const Metric& m) { return {{"value", m.value}, {"undefined", m.undefined}}; }
Metric metric_from(const Json& j) { return {j.at("value").get<double>(), j.at("undefined").get<bool>()}; }

}  // namespace

std::string report_to_json(const EvalReport& r) {
  Json per_class = Json::array();
  for (const ClassMetrics& c : r.per_class) {
    per_class.push_back({{"class", std::string(to_string(c.label))},
                         {"precision", metric_json(c.precision)},
                         {"recall", metric_json(c.recall)},
                         {"f1", metric_json(c.f1)},
                         {"support", c.support}});
  }
  Json roc = Json::array();
  for (const RocPoint& p : r.roc) {
    // JSON has no infinity; the sentinel threshold is written as null.
    roc.push_back({{"threshold", std::isinf(p.threshold) ? Json(nullptr) : Json(p.threshold)},
                   {"tpr", p.tpr},
                   {"fpr", p.fpr}});
  }
  const Json j = {
      {"model", r.model},
      {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}},
      {"accuracy", r.accuracy},
      {"per_class", per_class},
      {"weighted", {{"precision", r.weighted.precision}, {"recall", r.weighted.recall}, {"f1", r.weighted.f1}}},
      {"roc", roc},
      {"auc", r.auc ? Json(*r.auc) : Json(nullptr)},
      {"config_hash", r.config_hash},
      {"metadata", r.metadata}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text, const std::string& source) {
  const Json j = parse_json_text(text, source);
  try {
    EvalReport r;
    r.model = j.at("model").get<std::string>();
    const Json& cm = j.at("confusion");
    r.confusion = {cm.at("tp").get<std::int64_t>(), cm.at("fp").get<std::int64_t>(),
                   cm.at("fn").get<std::int64_t>(), cm.at("tn").get<std::int64_t>()};
    r.accuracy = j.at("accuracy").get<double>();
    const Json& pc = j.at("per_class");
    require(pc.size() == 2, ErrorCode::kParse, source + ": per_class must have two entries");
    for (std::size_t i = 0; i < 2; ++i) {
      const auto label = parse_label(pc[i].at("class").get<std::string>());
      require(label.has_value(), ErrorCode::kParse, source + ": unknown class label");
      r.per_class[i] = {*label, metric_from(pc[i].at("precision")), metric_from(pc[i].at("recall")),
                        metric_from(pc[i].at("f1")), pc[i].at("support").get<std::int64_t>()};
    }
    const Json& w = j.at("weighted");
    r.weighted = {w.at("precision").get<double>(), w.at("recall").get<double>(), w.at("f1").get<double>()};
    for (const Json& p : j.at("roc")) {
      const double t = p.at("threshold").is_null() ? std::numeric_limits<double>::infinity()
                                                   : p.at("threshold").get<double>();
      r.roc.push_back({t, p.at("tpr").get<double>(), p.at("fpr").get<double>()});
    }
    if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, source + ": malformed report: " + e.what());
  }
}

namespace {

std::string class_name(Label l) { return l == Label::kCovid ? "COVID" : "non-COVID"; }

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

std::string render_tables(std::span<const EvalReport> reports) {
  std::size_t name_width = 5;
  for (const auto& r : reports) name_width = std::max(name_width, r.model.size());
  name_width += 2;

  std::ostringstream out;
  out << "Overall performance (%)\n";
  out << pad("Model", name_width) << "| Accuracy / Precision / Recall / F1-score | AUC\n";
  out << std::string(name_width, '-') << "+------------------------------------------+-------\n";
  for (const auto& r : reports) {
    out << pad(r.model, name_width) << "| "
        << pad(format_percent(r.accuracy) + " / " + format_percent(r.weighted.precision) + " / " +
                   format_percent(r.weighted.recall) + " / " + format_percent(r.weighted.f1),
               41)
        << "| " << (r.auc ? fmt("%.3f", *r.auc) : std::string("-")) << "\n";
  }
  out << "\nClass-wise performance (%)\n";
  out << pad("Model", name_width) << "| Class     | Precision | Recall | F1-score | Support\n";
  out << std::string(name_width, '-') << "+-----------+-----------+--------+----------+--------\n";
  for (const auto& r : reports) {
    for (const ClassMetrics& c : r.per_class) {
      auto cell = [](const Metric& m, std::size_t w) { return pad(format_percent(m.value) + (m.undefined ? "*" : ""), w); };
      out << pad(r.model, name_width) << "| " << pad(class_name(c.label), 10) << "| " << cell(c.precision, 10)
          << "| " << cell(c.recall, 7) << "| " << cell(c.f1, 9) << "| " << c.support << "\n";
    }
  }
  out << "\nConfusion matrices (rows: actual, columns: predicted COVID / non-COVID)\n";
  for (const auto& r : reports) {
    out << pad(r.model, name_width) << "| COVID: " << r.confusion.tp << " / " << r.confusion.fn
        << "   non-COVID: " << r.confusion.fp << " / " << r.confusion.tn << "\n";
  }
  bool any_undefined = false;
  for (const auto& r : reports)
    for (const auto& c : r.per_class) any_undefined |= c.precision.undefined || c.recall.undefined || c.f1.undefined;
  if (any_undefined) out << "\n* zero denominator; reported as 0\n";
  return out.str();
}

std::string confusion_svg(const EvalReport& r) {
  const std::int64_t cells[2][2] = {{r.confusion.tp, r.confusion.fn}, {r.confusion.fp, r.confusion.tn}};
  std::int64_t peak = 1;
  for (const auto& row : cells)
    for (auto v : row) peak = std::max(peak, v);
  const char* names[2] = {"COVID", "non-COVID"};
  std::ostringstream s;
  s << R"(<svg xmlns="http://www.w3.org/2000/svg" width="420" height="380" font-family="sans-serif">)" << "\n";
  s << R"(<rect width="100%" height="100%" fill="white"/>)" << "\n";
  s << R"(<text x="250" y="28" text-anchor="middle" font-size="16">)" << xml_escape(r.model) << "</text>\n";
  s << R"(<text x="250" y="362" text-anchor="middle" font-size="14">Predicted label</text>)" << "\n";
  s << R"svg(<text x="24" y="190" text-anchor="middle" font-size="14" transform="rotate(-90 24 190)">True label</text>)svg" << "\n";
  for (int i = 0; i < 2; ++i) {
    s << R"(<text x="80" y=")" << 120 + i * 140 << R"(" text-anchor="end" font-size="13">)" << names[i] << "</text>\n";
    s << R"(<text x=")" << 180 + i * 140 << R"(" y="335" text-anchor="middle" font-size="13">)" << names[i] << "</text>\n";
    for (int j = 0; j < 2; ++j) {
      const double shade = static_cast<double>(cells[i][j]) / static_cast<double>(peak);
      const int level = static_cast<int>(std::lround(240.0 - 190.0 * shade));
      const int x = 110 + j * 140, y = 50 + i * 140;
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"140\" height=\"140\" fill=\"rgb(" << level << ","
        << level << ",255)\" stroke=\"black\"/>\n";
      s << "<text x=\"" << x + 70 << "\" y=\"" << y + 76 << "\" text-anchor=\"middle\" font-size=\"22\" fill=\""
        << (shade > 0.6 ? "white" : "black") << "\">" << cells[i][j] << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string roc_svg(std::span<const EvalReport> reports) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  constexpr double x0 = 70, y0 = 430, size = 380;
  std::ostringstream s;
  s << R"(<svg xmlns="http://www.w3.org/2000/svg" width="500" height="500" font-family="sans-serif">)" << "\n";
  s << R"(<rect width="100%" height="100%" fill="white"/>)" << "\n";
  s << "<rect x=\"" << x0 << "\" y=\"" << y0 - size << "\" width=\"" << size << "\" height=\"" << size
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 + size << "\" y2=\"" << y0 - size
    << "\" stroke=\"gray\" stroke-dasharray=\"5,5\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    s << "<text x=\"" << x0 + v * size << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << fmt("%.1f", v) << "</text>\n";
    s << "<text x=\"" << x0 - 8 << "\" y=\"" << y0 - v * size + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
      << fmt("%.1f", v) << "</text>\n";
  }
  s << "<text x=\"" << x0 + size / 2 << "\" y=\"" << y0 + 42 << "\" text-anchor=\"middle\" font-size=\"14\">False positive rate</text>\n";
  s << "<text x=\"20\" y=\"" << y0 - size / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 "
    << y0 - size / 2 << ")\">True positive rate</text>\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    const char* color = colors[i % std::size(colors)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const RocPoint& p : r.roc) s << fmt("%.2f", x0 + p.fpr * size) << "," << fmt("%.2f", y0 - p.tpr * size) << " ";
    s << "\"/>\n";
    const double ly = y0 - 20 - 20.0 * static_cast<double>(reports.size() - 1 - i);
    s << "<line x1=\"" << x0 + 170 << "\" y1=\"" << ly << "\" x2=\"" << x0 + 195 << "\" y2=\"" << ly << "\" stroke=\""
      << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << x0 + 200 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << xml_escape(r.model)
      << " (AUC = " << (r.auc ? fmt("%.3f", *r.auc) : std::string("n/a")) << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void render_report(const EvalReport& report, const fs::path& out_dir) {
  require(!report.roc.empty(), ErrorCode::kInput, "render_report: report '" + report.model + "' has no ROC points");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create report directory " + out_dir.string() + ": " + ec.message());
  io::write_text_file(out_dir / "metrics.txt", render_tables(std::span(&report, 1)));
  io::write_text_file(out_dir / "confusion_matrix.svg", confusion_svg(report));
  io::write_text_file(out_dir / "roc.svg", roc_svg(std::span(&report, 1)));
  io::write_text_file(out_dir / "report.json", report_to_json(report));
}

void render_comparison(std::span<const EvalReport> reports, const fs::path& out_dir) {
  require(!reports.empty(), ErrorCode::kInput, "render_comparison: no reports");
  for (const auto& r : reports) {
    require(!r.roc.empty(), ErrorCode::kInput, "render_comparison: report '" + r.model + "' has no ROC points");
  }
  io::write_text_file(out_dir / "comparison.txt", render_tables(reports));
  io::write_text_file(out_dir / "roc_comparison.svg", roc_svg(reports));
}

}  // namespace hybridct
