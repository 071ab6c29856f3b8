#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hybridct/tensor.hpp"

namespace hybridct {

// COVID is the positive class (label 1) everywhere in the library.
enum class Label { kNonCovid = 0, kCovid = 1 };
enum class Split { kUnassigned, kTrain, kVal, kTest };

std::string_view to_string(Label label);  // "COVID" / "NONCOVID"
std::string_view to_string(Split split);  // "TRAIN" / "VAL" / "TEST" / "UNASSIGNED"
std::optional<Label> parse_label(std::string_view text);
std::optional<Split> parse_split(std::string_view text);
inline int label_value(Label label) { return label == Label::kCovid ? 1 : 0; }

struct ImageRecord {
  std::filesystem::path path;
  Label label = Label::kNonCovid;
  Split split = Split::kUnassigned;
  // "<class directory>/<path relative to it>", unique within a manifest.
  std::string record_id;
  // Empty unless the split ran in patient mode.
  std::string patient_id;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

enum class SplitMode { kImage, kPatient };

struct SkippedFile {
  std::filesystem::path path;
  std::string reason;
  friend bool operator==(const SkippedFile&, const SkippedFile&) = default;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;  // sorted by path
  std::uint64_t seed = 0;
  double train_frac = 0.0;  // fraction of all records outside TEST
  double val_frac = 0.0;    // fraction of the training portion carved off as VAL
  SplitMode split_mode = SplitMode::kImage;
  std::vector<SkippedFile> skipped;

  bool is_split() const;
  std::size_t count(Label label, Split split) const;
  std::size_t count(Split split) const;
  std::size_t count(Label label) const;
  // (train, val, test) shares of the whole dataset.
  std::array<double, 3> fractions() const;
  std::vector<const ImageRecord*> select(Split split) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct ScanOptions {
  // Directory name -> label. Directories not listed map to `fallback`.
  std::map<std::string, Label, std::less<>> label_map = {{"COVID", Label::kCovid}};
  Label fallback = Label::kNonCovid;
  // Full decode of every candidate; disable to accept any file with an image
  // extension.
  bool verify_decode = true;
};

// One record per decodable image under the two class directories of `root`.
// Unreadable or non-image files land in `skipped` with a warning on stderr.
DatasetManifest scan_dataset(const std::filesystem::path& root, const ScanOptions& options = {});

struct SplitOptions {
  double train_frac = 0.85;
  double val_frac = 0.10;
  std::uint64_t seed = 42;
  SplitMode mode = SplitMode::kImage;
  // Patient mode: first capture group of this regex applied to the file name.
  std::string patient_pattern = R"(^([^_\-\s]+))";
};

// Deterministic stratified split. Split sizes follow the usual convention
// n_test = ceil(test_frac * N) and n_val = ceil(val_frac * (N - n_test));
// per-class counts are a controlled rounding of the proportional allocation
// so that every class/split cell is within one image of its exact share.
DatasetManifest split_dataset(const DatasetManifest& manifest, const SplitOptions& options);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text, std::string_view source = "<manifest>");

// Decoded, resized (bilinear) and [0,1]-scaled 224x224x3 image.
struct ImageTensor {
  Tensor pixels;
  std::string source;
};

ImageTensor load_image(const ImageRecord& record);
// Same pipeline from an arbitrary path, exposed for tools and tests.
Tensor load_image_file(const std::filesystem::path& path, int size = 224);

}  // namespace hybridct
