#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hybridct/augmentation.hpp"
#include "hybridct/backbone.hpp"
#include "hybridct/data_ingest.hpp"
#include "hybridct/evaluation.hpp"
#include "hybridct/fusion.hpp"
#include "hybridct/head.hpp"
#include "hybridct/svc.hpp"
#include "hybridct/transfer.hpp"

namespace hybridct {

// Everything a run depends on. Defaults are the published training setup;
// a config file only needs the keys it changes.
struct RunConfig {
  std::filesystem::path data_root;
  std::uint64_t seed = 42;  // split, head initialization, augmentation and dropout
  double train_frac = 0.85;
  double val_frac = 0.10;
  SplitMode split_mode = SplitMode::kImage;
  std::string patient_pattern = SplitOptions{}.patient_pattern;
  AugmentationConfig augmentation;
  HeadConfig head;
  TrainConfig train;  // train.seed is always `seed`
  WeightsSource weights = WeightsSource::imagenet();
  bool imagenet_preproc = false;
  FusionConfig fusion;
  SvcConfig svc;
  std::filesystem::path output_dir = "runs/default";

  void validate() const;
  SplitOptions split_options() const;
  TrainConfig train_config() const;
  InputScaling input_scaling() const;
};

nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
// Relative data_root / output_dir resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

// Hash of every setting that can change a result (output_dir excluded).
// Stable under key reordering in the config file.
std::string config_hash(const RunConfig& config);

struct StageRecord {
  std::string hash;
  std::string completed_at;  // UTC, ISO 8601
  std::vector<std::string> artifacts;  // relative to the run directory
};

struct RunManifest {
  std::string config_hash;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> environment;
  std::map<std::string, StageRecord> stages;
  nlohmann::json summary = nlohmann::json::object();
};

inline constexpr int kRunManifestVersion = 1;

std::string format_run_manifest(const RunManifest& manifest);
RunManifest read_run_manifest(const std::filesystem::path& path);

struct PipelineOptions {
  // Replace artifacts whose recorded hash no longer matches the config.
  bool force = false;
  std::ostream* log = nullptr;  // progress lines; defaults to std::clog
};

// Stage names: "prepare", "train/<backbone>", "extract", "fuse", "fit-svc",
// "evaluate". Each stage is skipped when its recorded hash matches and its
// artifacts exist; a mismatched hash is an error unless `force` is set.
class Pipeline {
 public:
  Pipeline(RunConfig config, std::filesystem::path run_dir, PipelineOptions options = {});

  // Each returns true when the stage ran, false when it was up to date.
  bool prepare();
  bool train(BackboneId backbone);
  bool extract();
  bool fuse();
  bool fit_svc();
  bool evaluate();
  void run_all();

  // Unconditionally rerun one stage (upstream must still be current).
  void invalidate(const std::string& stage);

  std::string stage_hash(const std::string& stage) const;
  const RunManifest& manifest() const { return manifest_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }
  std::filesystem::path manifest_path() const { return run_dir_ / "manifest.json"; }

 private:
  enum class Decision { kSkip, kRun };
  Decision decide(const std::string& stage);
  void require_current(const std::string& stage) const;
  void complete(const std::string& stage, std::vector<std::string> artifacts);
  void save_manifest();
  std::ostream& log() const;
  DatasetManifest load_data_manifest() const;

  RunConfig config_;
  std::filesystem::path run_dir_;
  PipelineOptions options_;
  RunManifest manifest_;
};

// Applies HYBRIDCT_THREADS, if set, to the numeric backends.
void apply_thread_override();

}  // namespace hybridct
