#include "hybridct/data_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <map>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <regex>
#include <set>
#include <sstream>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/rng.hpp"

namespace hybridct {

namespace fs = std::filesystem;

std::string_view to_string(Label label) { return label == Label::kCovid ? "COVID" : "NONCOVID"; }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "TRAIN";
    case Split::kVal: return "VAL";
    case Split::kTest: return "TEST";
    case Split::kUnassigned: return "UNASSIGNED";
  }
  return "UNASSIGNED";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "COVID") return Label::kCovid;
  if (text == "NONCOVID") return Label::kNonCovid;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view text) {
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest, Split::kUnassigned})
    if (text == to_string(s)) return s;
  return std::nullopt;
}

bool DatasetManifest::is_split() const {
  return !records.empty() &&
         std::none_of(records.begin(), records.end(),
                      [](const ImageRecord& r) { return r.split == Split::kUnassigned; });
}

std::size_t DatasetManifest::count(Label label, Split split) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const ImageRecord& r) {
    return r.label == label && r.split == split;
  }));
}

std::size_t DatasetManifest::count(Split split) const {
  return count(Label::kCovid, split) + count(Label::kNonCovid, split);
}

std::size_t DatasetManifest::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const ImageRecord& r) { return r.label == label; }));
}

std::array<double, 3> DatasetManifest::fractions() const {
  const double test = 1.0 - train_frac;
  return {train_frac * (1.0 - val_frac), train_frac * val_frac, test};
}

std::vector<const ImageRecord*> DatasetManifest::select(Split split) const {
  std::vector<const ImageRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

namespace {

bool has_image_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

bool is_hidden(const fs::path& path) {
  const std::string name = path.filename().string();
  return !name.empty() && name.front() == '.';
}

void warn(const std::string& message) { std::clog << "warning: " << message << '\n'; }

}  // namespace

DatasetManifest scan_dataset(const fs::path& root, const ScanOptions& options) {
  require(fs::is_directory(root), ErrorCode::kConfig,
          "dataset root " + root.string() + " is not a directory");

  DatasetManifest manifest;
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (is_hidden(entry.path())) continue;
    if (entry.is_directory()) {
      class_dirs.push_back(entry.path());
    } else {
      manifest.skipped.push_back({entry.path(), "outside the class directories"});
    }
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() != 2) {
    std::string found;
    for (const auto& d : class_dirs) found += " '" + d.filename().string() + "'";
    fail(ErrorCode::kConfig, "dataset root " + root.string() +
                                 " must contain exactly two class directories, found " +
                                 std::to_string(class_dirs.size()) + (found.empty() ? "" : ":" + found));
  }

  auto label_of = [&](const fs::path& dir) {
    const auto it = options.label_map.find(dir.filename().string());
    return it == options.label_map.end() ? options.fallback : it->second;
  };
  if (label_of(class_dirs[0]) == label_of(class_dirs[1])) {
    fail(ErrorCode::kConfig, "class directories '" + class_dirs[0].filename().string() + "' and '" +
                                 class_dirs[1].filename().string() + "' both map to " +
                                 std::string(to_string(label_of(class_dirs[0]))));
  }

  std::set<std::string> ids;
  for (const auto& dir : class_dirs) {
    const Label label = label_of(dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && !is_hidden(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      if (!has_image_extension(file)) {
        manifest.skipped.push_back({file, "not an image file"});
        continue;
      }
      if (options.verify_decode && cv::imread(file.string(), cv::IMREAD_UNCHANGED).empty()) {
        manifest.skipped.push_back({file, "undecodable image"});
        continue;
      }
      ImageRecord record;
      record.path = file;
      record.label = label;
      record.record_id = dir.filename().string() + "/" + fs::relative(file, dir).generic_string();
      require(ids.insert(record.record_id).second, ErrorCode::kConfig,
              "duplicate record id " + record.record_id);
      manifest.records.push_back(std::move(record));
    }
  }
  for (const auto& s : manifest.skipped) warn("skipping " + s.path.string() + ": " + s.reason);
  if (manifest.records.empty())
    fail(ErrorCode::kEmptyDataset, "no decodable images under " + root.string());
  std::sort(manifest.records.begin(), manifest.records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  return manifest;
}

namespace {

constexpr std::array<Split, 3> kSplitOrder = {Split::kTrain, Split::kVal, Split::kTest};

std::size_t ceil_count(double fraction, std::size_t n) {
  // Tolerance absorbs representation error, e.g. (1 - 0.8) * 10.
  const double exact = fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

// Largest-remainder apportionment of `class_size` over the splits, quotas
// class_size * totals[s] / n computed in exact integer arithmetic. Ties go
// to the earlier split in kSplitOrder.
std::array<std::size_t, 3> apportion(std::size_t class_size, const std::array<std::size_t, 3>& totals,
                                     std::size_t n) {
  std::array<std::size_t, 3> cells{};
  std::array<std::size_t, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t numerator = class_size * totals[s];
    cells[s] = numerator / n;
    remainders[s] = numerator % n;
    assigned += cells[s];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < class_size; ++i, ++assigned) ++cells[order[i]];
  return cells;
}

std::string patient_of(const ImageRecord& record, const std::regex& pattern) {
  const std::string name = record.path.filename().string();
  std::smatch match;
  if (std::regex_search(name, match, pattern) && match.size() > 1 && match[1].length() > 0)
    return match[1].str();
  fail(ErrorCode::kConfig, "cannot derive a patient id from " + name);
}

}  // namespace

DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitOptions& options) {
  require(options.train_frac > 0.0 && options.train_frac < 1.0, ErrorCode::kConfig,
          "train_frac must lie in (0, 1)");
  require(options.val_frac >= 0.0 && options.val_frac < 1.0, ErrorCode::kConfig,
          "val_frac must lie in [0, 1)");
  require(!manifest.records.empty(), ErrorCode::kEmptyDataset, "cannot split an empty manifest");

  DatasetManifest out = manifest;
  out.seed = options.seed;
  out.train_frac = options.train_frac;
  out.val_frac = options.val_frac;
  out.split_mode = options.mode;
  std::sort(out.records.begin(), out.records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });

  const std::size_t n = out.records.size();
  const std::size_t n_test = ceil_count(1.0 - options.train_frac, n);
  const std::size_t n_val = ceil_count(options.val_frac, n - n_test);
  require(n_test < n && n_val + n_test < n, ErrorCode::kStratification,
          "dataset of " + std::to_string(n) + " images is too small for the requested fractions");
  const std::array<std::size_t, 3> totals = {n - n_test - n_val, n_val, n_test};

  std::map<Label, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[out.records[i].label].push_back(i);

  // Controlled rounding: COVID cells are apportioned, NONCOVID cells are the
  // complement, so both rows are floor/ceil of their exact quotas.
  std::map<Label, std::array<std::size_t, 3>> cells;
  const std::size_t covid = by_class[Label::kCovid].size();
  cells[Label::kCovid] = apportion(covid, totals, n);
  for (std::size_t s = 0; s < 3; ++s)
    cells[Label::kNonCovid][s] = totals[s] - cells[Label::kCovid][s];

  for (const auto& [label, row] : cells)
    for (std::size_t s = 0; s < 3; ++s)
      if (totals[s] > 0 && row[s] == 0) {
        fail(ErrorCode::kStratification,
             "class " + std::string(to_string(label)) + " has " +
                 std::to_string(by_class[label].size()) + " images, too few to populate split " +
                 std::string(to_string(kSplitOrder[s])));
      }

  Rng rng(options.seed);
  const std::regex pattern(options.patient_pattern);
  for (Label label : {Label::kCovid, Label::kNonCovid}) {
    auto& members = by_class[label];
    const auto& row = cells[label];
    if (options.mode == SplitMode::kImage) {
      rng.shuffle(std::span(members));
      std::size_t cursor = 0;
      // TEST first, then VAL; the remainder is TRAIN.
      for (std::size_t s : {std::size_t{2}, std::size_t{1}, std::size_t{0}})
        for (std::size_t k = 0; k < row[s]; ++k) out.records[members[cursor++]].split = kSplitOrder[s];
      continue;
    }
    // Patient mode: whole patients move together, so cells only approximate
    // the quotas.
    std::map<std::string, std::vector<std::size_t>> patients;
    for (std::size_t idx : members) {
      out.records[idx].patient_id = patient_of(out.records[idx], pattern);
      patients[out.records[idx].patient_id].push_back(idx);
    }
    std::vector<std::string> order;
    for (const auto& [pid, _] : patients) order.push_back(pid);
    rng.shuffle(std::span(order));
    std::size_t test_filled = 0, val_filled = 0;
    for (const auto& pid : order) {
      Split target = Split::kTrain;
      if (test_filled < row[2]) {
        target = Split::kTest;
        test_filled += patients[pid].size();
      } else if (val_filled < row[1]) {
        target = Split::kVal;
        val_filled += patients[pid].size();
      }
      for (std::size_t idx : patients[pid]) out.records[idx].split = target;
    }
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  out << "hybridct-manifest\t1\n";
  out << "seed\t" << manifest.seed << '\n';
  out << "train_frac\t" << format_double(manifest.train_frac) << '\n';
  out << "val_frac\t" << format_double(manifest.val_frac) << '\n';
  out << "split_mode\t" << (manifest.split_mode == SplitMode::kImage ? "image" : "patient") << '\n';
  for (Label label : {Label::kCovid, Label::kNonCovid})
    for (Split split : {Split::kTrain, Split::kVal, Split::kTest, Split::kUnassigned})
      out << "count\t" << to_string(label) << '\t' << to_string(split) << '\t'
          << manifest.count(label, split) << '\n';
  for (const auto& s : manifest.skipped) out << "skipped\t" << s.reason << '\t' << s.path.string() << '\n';
  for (const auto& r : manifest.records) {
    out << "record\t" << to_string(r.split) << '\t' << to_string(r.label) << '\t' << r.record_id << '\t'
        << (r.patient_id.empty() ? "-" : r.patient_id) << '\t' << r.path.string() << '\n';
  }
  return out.str();
}

DatasetManifest parse_manifest(std::string_view text, std::string_view source) {
  DatasetManifest manifest;
  std::size_t line_no = 0;
  auto error = [&](const std::string& message) {
    fail(ErrorCode::kParse, std::string(source) + ":" + std::to_string(line_no) + ": " + message);
  };
  auto parse_u64 = [&](std::string_view field) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) error("invalid integer '" + std::string(field) + "'");
    return v;
  };
  auto parse_f64 = [&](std::string_view field) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) error("invalid number '" + std::string(field) + "'");
    return v;
  };

  bool saw_header = false;
  std::map<std::pair<Label, Split>, std::uint64_t> declared_counts;
  std::set<std::string> ids;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const std::string_view key = fields[0];
    if (!saw_header) {
      if (key != "hybridct-manifest") error("missing 'hybridct-manifest' header");
      if (fields.size() != 2 || fields[1] != "1")
        fail(ErrorCode::kVersionMismatch, std::string(source) + ": unsupported manifest version");
      saw_header = true;
      continue;
    }
    if (key == "seed" && fields.size() == 2) {
      manifest.seed = parse_u64(fields[1]);
    } else if (key == "train_frac" && fields.size() == 2) {
      manifest.train_frac = parse_f64(fields[1]);
    } else if (key == "val_frac" && fields.size() == 2) {
      manifest.val_frac = parse_f64(fields[1]);
    } else if (key == "split_mode" && fields.size() == 2) {
      if (fields[1] == "image") manifest.split_mode = SplitMode::kImage;
      else if (fields[1] == "patient") manifest.split_mode = SplitMode::kPatient;
      else error("unknown split mode '" + std::string(fields[1]) + "'");
    } else if (key == "count" && fields.size() == 4) {
      const auto label = parse_label(fields[1]);
      if (!label) error("unknown label '" + std::string(fields[1]) + "'");
      const auto split = parse_split(fields[2]);
      if (!split) error("unknown split '" + std::string(fields[2]) + "'");
      declared_counts[{*label, *split}] = parse_u64(fields[3]);
    } else if (key == "skipped" && fields.size() == 3) {
      manifest.skipped.push_back({fs::path(std::string(fields[2])), std::string(fields[1])});
    } else if (key == "record" && fields.size() == 6) {
      ImageRecord r;
      const auto split = parse_split(fields[1]);
      if (!split) error("unknown split '" + std::string(fields[1]) + "'");
      const auto label = parse_label(fields[2]);
      if (!label) error("unknown label '" + std::string(fields[2]) + "'");
      r.split = *split;
      r.label = *label;
      r.record_id = std::string(fields[3]);
      if (r.record_id.empty()) error("empty record id");
      if (!ids.insert(r.record_id).second) error("duplicate record id '" + r.record_id + "'");
      r.patient_id = fields[4] == "-" ? "" : std::string(fields[4]);
      r.path = fs::path(std::string(fields[5]));
      manifest.records.push_back(std::move(r));
    } else {
      error("unrecognized line '" + std::string(line.substr(0, 60)) + "'");
    }
  }
  if (!saw_header) {
    line_no = 0;
    error("empty manifest");
  }
  for (const auto& [cell, declared] : declared_counts) {
    if (manifest.count(cell.first, cell.second) != declared) {
      fail(ErrorCode::kParse, std::string(source) + ": declared count for " +
                                  std::string(to_string(cell.first)) + "/" +
                                  std::string(to_string(cell.second)) + " does not match its records");
    }
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  io::write_text_file(path, format_manifest(manifest));
}

DatasetManifest read_manifest(const fs::path& path) {
  return parse_manifest(io::read_text_file(path), path.string());
}

Tensor load_image_file(const fs::path& path, int size) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) fail(ErrorCode::kLoad, "cannot decode image " + path.string());
  if (raw.depth() == CV_16U) raw.convertTo(raw, CV_8U, 1.0 / 257.0);
  if (raw.depth() != CV_8U) fail(ErrorCode::kLoad, "unsupported pixel depth in " + path.string());

  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default: fail(ErrorCode::kLoad, "unsupported channel count in " + path.string());
  }
  // Resampling the 8-bit image keeps constant regions exact after scaling.
  cv::Mat resized;
  if (rgb.rows != size || rgb.cols != size) {
    cv::resize(rgb, resized, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  } else {
    resized = rgb;
  }
  Tensor out(size, size, 3);
  for (int y = 0; y < size; ++y) {
    const auto* row = resized.ptr<std::uint8_t>(y);
    for (int i = 0; i < size * 3; ++i)
      out.data[static_cast<std::size_t>(y) * size * 3 + i] = static_cast<float>(row[i]) / 255.0f;
  }
  return out;
}

ImageTensor load_image(const ImageRecord& record) {
  return {load_image_file(record.path), record.record_id};
}

}  // namespace hybridct
