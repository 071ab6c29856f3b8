#include "hybridct/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <set>

#include <Eigen/Core>
#include <opencv2/core.hpp>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/hash.hpp"
#include "hybridct/json_io.hpp"

namespace hybridct {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  require(train_frac > 0.0 && train_frac < 1.0, ErrorCode::kConfig, "split.train_frac must lie in (0, 1)");
  require(val_frac >= 0.0 && val_frac < 1.0, ErrorCode::kConfig, "split.val_frac must lie in [0, 1)");
  augmentation.validate();
  head.validate();
  train_config().validate();
  fusion.validate();
  svc.validate();
}

SplitOptions RunConfig::split_options() const {
  SplitOptions s;
  s.train_frac = train_frac;
  s.val_frac = val_frac;
  s.seed = seed;
  s.mode = split_mode;
  s.patient_pattern = patient_pattern;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

InputScaling RunConfig::input_scaling() const {
  return imagenet_preproc ? InputScaling::kImagenet : InputScaling::kUnit;
}

namespace {

std::string split_mode_name(SplitMode m) { return m == SplitMode::kImage ? "image" : "patient"; }

SplitMode parse_split_mode(const std::string& s) {
  if (s == "image") return SplitMode::kImage;
  if (s == "patient") return SplitMode::kPatient;
  fail(ErrorCode::kConfig, "split.mode must be \"image\" or \"patient\", got '" + s + "'");
}

Json svc_to_json(const SvcConfig& c) {
  return {{"kernel", std::string(to_string(c.kernel))},
          {"C", c.c},
          {"gamma", c.gamma ? Json(*c.gamma) : Json("auto")},
          {"poly_degree", c.poly_degree},
          {"coef0", c.coef0},
          {"tolerance", c.tolerance},
          {"max_iterations", c.max_iterations}};
}

SvcConfig svc_from_json(const Json& j) {
  reject_unknown_keys(j, "svc", {"kernel", "C", "gamma", "poly_degree", "coef0", "tolerance", "max_iterations"});
  SvcConfig c;
  c.kernel = parse_kernel(json_get(j, "kernel", std::string(to_string(c.kernel))));
  c.c = json_get(j, "C", c.c);
  if (j.contains("gamma")) {
    const Json& g = j.at("gamma");
    if (g.is_string()) {
      if (g.get<std::string>() != "auto") fail(ErrorCode::kConfig, "svc.gamma must be a number or \"auto\"");
    } else if (g.is_number()) {
      c.gamma = g.get<double>();
    } else {
      fail(ErrorCode::kConfig, "svc.gamma must be a number or \"auto\"");
    }
  }
  c.poly_degree = json_get(j, "poly_degree", c.poly_degree);
  c.coef0 = json_get(j, "coef0", c.coef0);
  c.tolerance = json_get(j, "tolerance", c.tolerance);
  c.max_iterations = json_get(j, "max_iterations", c.max_iterations);
  return c;
}

Json semantic_json(const RunConfig& c) {
  Json train = c.train;
  train.erase("seed");
  return {{"data_root", c.data_root.string()},
          {"seed", c.seed},
          {"split",
           {{"train_frac", c.train_frac},
            {"val_frac", c.val_frac},
            {"mode", split_mode_name(c.split_mode)},
            {"patient_pattern", c.patient_pattern}}},
          {"augmentation", c.augmentation},
          {"head", c.head},
          {"train", train},
          {"weights", c.weights.describe()},
          {"imagenet_preproc", c.imagenet_preproc},
          {"fusion", {{"variance_target", c.fusion.variance_target}, {"pca_after_stack", c.fusion.pca_after_stack}}},
          {"svc", svc_to_json(c.svc)}};
}

std::string hash_json(const Json& j) { return to_hex(fnv1a64(j.dump())); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::map<std::string, std::string> environment_fingerprint() {
  return {{"hybridct", "0.1.0"},
          {"compiler", std::string("gcc ") + __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"opencv", CV_VERSION},
          {"threads", std::to_string(Eigen::nbThreads())}};
}

}  // namespace

Json run_config_to_json(const RunConfig& config) {
  Json j = semantic_json(config);
  j["output_dir"] = config.output_dir.string();
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  reject_unknown_keys(j, "config",
                      {"data_root", "seed", "split", "augmentation", "head", "train", "weights",
                       "imagenet_preproc", "fusion", "svc", "output_dir"});
  RunConfig c;
  c.data_root = json_get(j, "data_root", std::string());
  c.seed = json_get(j, "seed", c.seed);
  if (j.contains("split")) {
    const Json& s = j.at("split");
    reject_unknown_keys(s, "split", {"train_frac", "val_frac", "mode", "patient_pattern"});
    c.train_frac = json_get(s, "train_frac", c.train_frac);
    c.val_frac = json_get(s, "val_frac", c.val_frac);
    c.split_mode = parse_split_mode(json_get(s, "mode", split_mode_name(c.split_mode)));
    c.patient_pattern = json_get(s, "patient_pattern", c.patient_pattern);
  }
  try {
    if (j.contains("augmentation")) c.augmentation = j.at("augmentation").get<AugmentationConfig>();
    if (j.contains("head")) c.head = j.at("head").get<HeadConfig>();
    if (j.contains("train")) {
      if (j.at("train").contains("seed")) fail(ErrorCode::kConfig, "train.seed is not configurable; set the top-level seed");
      c.train = j.at("train").get<TrainConfig>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("invalid config: ") + e.what());
  }
  c.train.seed = c.seed;
  c.weights = WeightsSource::parse(json_get(j, "weights", c.weights.describe()));
  c.imagenet_preproc = json_get(j, "imagenet_preproc", c.imagenet_preproc);
  if (j.contains("fusion")) {
    const Json& f = j.at("fusion");
    reject_unknown_keys(f, "fusion", {"variance_target", "pca_after_stack"});
    c.fusion.variance_target = json_get(f, "variance_target", c.fusion.variance_target);
    c.fusion.pca_after_stack = json_get(f, "pca_after_stack", c.fusion.pca_after_stack);
  }
  if (j.contains("svc")) c.svc = svc_from_json(j.at("svc"));
  c.output_dir = json_get(j, "output_dir", c.output_dir.string());
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, "config file not found: " + path.string());
  RunConfig c = run_config_from_json(parse_json_text(io::read_text_file(path), path.string()));
  const fs::path base = path.parent_path();
  if (!c.data_root.empty() && c.data_root.is_relative()) c.data_root = (base / c.data_root).lexically_normal();
  if (c.output_dir.is_relative()) c.output_dir = (base / c.output_dir).lexically_normal();
  return c;
}

std::string config_hash(const RunConfig& config) { return hash_json(semantic_json(config)); }

std::string format_run_manifest(const RunManifest& m) {
  Json stages = Json::object();
  for (const auto& [name, s] : m.stages) {
    stages[name] = {{"hash", s.hash}, {"completed_at", s.completed_at}, {"artifacts", s.artifacts}};
  }
  const Json j = {{"format_version", kRunManifestVersion},
                  {"config_hash", m.config_hash},
                  {"config", m.config},
                  {"seed", m.seed},
                  {"environment", m.environment},
                  {"stages", stages},
                  {"summary", m.summary}};
  return j.dump(2) + "\n";
}

RunManifest read_run_manifest(const fs::path& path) {
  const Json j = parse_json_text(io::read_text_file(path), path.string());
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kRunManifestVersion) {
      fail(ErrorCode::kVersionMismatch, path.string() + ": run manifest version " + std::to_string(version) +
                                            ", expected " + std::to_string(kRunManifestVersion));
    }
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.environment = j.at("environment").get<std::map<std::string, std::string>>();
    for (const auto& [name, s] : j.at("stages").items()) {
      m.stages[name] = {s.at("hash").get<std::string>(), s.at("completed_at").get<std::string>(),
                        s.at("artifacts").get<std::vector<std::string>>()};
    }
    m.summary = j.at("summary");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIntegrity, path.string() + ": malformed run manifest: " + e.what());
  }
}

Pipeline::Pipeline(RunConfig config, fs::path run_dir, PipelineOptions options)
    : config_(std::move(config)), run_dir_(std::move(run_dir)), options_(options) {
  config_.train.seed = config_.seed;
  config_.validate();
  if (fs::exists(manifest_path())) manifest_ = read_run_manifest(manifest_path());
}

std::ostream& Pipeline::log() const { return options_.log ? *options_.log : std::clog; }

std::string Pipeline::stage_hash(const std::string& stage) const {
  const RunConfig& c = config_;
  const Json semantic = semantic_json(c);
  if (stage == "prepare") {
    return hash_json({{"stage", stage}, {"data_root", semantic["data_root"]}, {"seed", c.seed}, {"split", semantic["split"]}});
  }
  if (stage.starts_with("train/")) {
    return hash_json({{"stage", stage},
                      {"upstream", stage_hash("prepare")},
                      {"augmentation", semantic["augmentation"]},
                      {"head", semantic["head"]},
                      {"train", semantic["train"]},
                      {"seed", c.seed},
                      {"weights", semantic["weights"]},
                      {"imagenet_preproc", c.imagenet_preproc}});
  }
  if (stage == "extract") {
    Json upstream = Json::array();
    for (BackboneId id : kCanonicalBackbones) upstream.push_back(stage_hash("train/" + std::string(to_string(id))));
    return hash_json({{"stage", stage}, {"upstream", upstream}});
  }
  if (stage == "fuse") return hash_json({{"stage", stage}, {"upstream", stage_hash("extract")}, {"fusion", semantic["fusion"]}});
  if (stage == "fit-svc") return hash_json({{"stage", stage}, {"upstream", stage_hash("fuse")}, {"svc", semantic["svc"]}});
  if (stage == "evaluate") return hash_json({{"stage", stage}, {"upstream", stage_hash("fit-svc")}});
  fail(ErrorCode::kConfig, "unknown stage '" + stage + "'");
}

Pipeline::Decision Pipeline::decide(const std::string& stage) {
  const std::string hash = stage_hash(stage);
  const auto it = manifest_.stages.find(stage);
  if (it == manifest_.stages.end()) return Decision::kRun;
  if (it->second.hash == hash) {
    for (const auto& a : it->second.artifacts) {
      if (!fs::exists(run_dir_ / a)) {
        log() << "[" << stage << "] artifact " << a << " is missing; rerunning\n";
        return Decision::kRun;
      }
    }
    log() << "[" << stage << "] up to date (" << hash << ")\n";
    return Decision::kSkip;
  }
  if (!options_.force) {
    fail(ErrorCode::kStaleArtifact, "[" + stage + "] existing artifacts were produced with a different configuration (recorded " +
                                        it->second.hash + ", current " + hash + "); rerun with --force to replace them");
  }
  log() << "[" << stage << "] stale (" << it->second.hash << " -> " << hash << "); rebuilding\n";
  return Decision::kRun;
}

void Pipeline::require_current(const std::string& stage) const {
  const auto it = manifest_.stages.find(stage);
  if (it == manifest_.stages.end()) {
    fail(ErrorCode::kNotFound, "stage '" + stage + "' has not been run in " + run_dir_.string());
  }
  if (it->second.hash != stage_hash(stage)) {
    fail(ErrorCode::kStaleArtifact, "stage '" + stage + "' is out of date for the current configuration; rerun it first");
  }
}

void Pipeline::invalidate(const std::string& stage) {
  stage_hash(stage);  // validates the name
  manifest_.stages.erase(stage);
}

void Pipeline::complete(const std::string& stage, std::vector<std::string> artifacts) {
  manifest_.stages[stage] = {stage_hash(stage), utc_now(), std::move(artifacts)};
  manifest_.environment = environment_fingerprint();
  save_manifest();
}

void Pipeline::save_manifest() {
  manifest_.config_hash = config_hash(config_);
  manifest_.config = run_config_to_json(config_);
  manifest_.seed = config_.seed;
  io::write_text_file(manifest_path(), format_run_manifest(manifest_));
}

DatasetManifest Pipeline::load_data_manifest() const {
  require_current("prepare");
  return read_manifest(run_dir_ / "data" / "manifest.tsv");
}

bool Pipeline::prepare() {
  if (decide("prepare") == Decision::kSkip) return false;
  require(!config_.data_root.empty(), ErrorCode::kConfig, "[prepare] data_root is not set");
  const DatasetManifest scanned = scan_dataset(config_.data_root);
  const DatasetManifest split = split_dataset(scanned, config_.split_options());
  write_manifest(split, run_dir_ / "data" / "manifest.tsv");
  log() << "[prepare] " << split.records.size() << " images (" << split.count(Label::kCovid) << " COVID, "
        << split.count(Label::kNonCovid) << " non-COVID); train/val/test = " << split.count(Split::kTrain) << "/"
        << split.count(Split::kVal) << "/" << split.count(Split::kTest) << "; skipped " << split.skipped.size() << "\n";
  complete("prepare", {"data/manifest.tsv"});
  return true;
}

namespace {

std::vector<ImageRecord> records_of(const DatasetManifest& m, Split split) {
  std::vector<ImageRecord> out;
  for (const ImageRecord* r : m.select(split)) out.push_back(*r);
  return out;
}

std::string model_dir(BackboneId id) { return "models/" + std::string(to_string(id)); }
std::string feature_file(const std::string& name, Split split) {
  std::string s(to_string(split));
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return "features/" + name + "_" + s + ".hctf";
}
std::string scores_file(BackboneId id) { return "features/" + std::string(to_string(id)) + "_test_scores.json"; }

std::vector<int> labels_for(const DatasetManifest& m, const std::vector<std::string>& ids) {
  std::map<std::string, int, std::less<>> by_id;
  for (const ImageRecord& r : m.records) by_id[r.record_id] = label_value(r.label);
  std::vector<int> out;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    require(it != by_id.end(), ErrorCode::kAlignment, "record '" + id + "' is not in the data manifest");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

bool Pipeline::train(BackboneId backbone) {
  const std::string stage = "train/" + std::string(to_string(backbone));
  require_current("prepare");
  if (decide(stage) == Decision::kSkip) return false;
  const DatasetManifest data = load_data_manifest();
  RecordImageSource train_images(records_of(data, Split::kTrain));
  RecordImageSource val_images(records_of(data, Split::kVal));

  BuildOptions build;
  build.weights = config_.weights;
  build.scaling = config_.input_scaling();
  build.head_seed = config_.seed;
  const Model model = build_model(backbone, config_.head, build);
  const ParamCounts counts = count_parameters(model);
  log() << "[" << stage << "] params total " << counts.total << ", trainable " << counts.trainable << ", frozen "
        << counts.frozen << "; " << train_images.size() << " train / " << val_images.size() << " val images\n";

  const std::string dir = model_dir(backbone);
  TrainOptions options;
  options.checkpoint_dir = run_dir_ / dir;
  const TrainConfig tc = config_.train_config();
  options.on_epoch = [&](const EpochRecord& r) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "[%s] epoch %d/%d loss %.4f acc %.4f val_loss %.4f val_acc %.4f lr %.2e\n",
                  stage.c_str(), r.epoch, tc.epochs, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy,
                  r.learning_rate);
    log() << buf << std::flush;
  };
  const ModelArtifact artifact = hybridct::train(model, train_images, val_images, config_.augmentation, tc, options);
  log() << "[" << stage << "] best epoch " << artifact.history.best_epoch
        << (artifact.history.early_stopped ? " (early stopped)" : "") << "\n";
  complete(stage, {dir + "/model.json", dir + "/head.hctm"});
  return true;
}

bool Pipeline::extract() {
  for (BackboneId id : kCanonicalBackbones) require_current("train/" + std::string(to_string(id)));
  if (decide("extract") == Decision::kSkip) return false;
  const DatasetManifest data = load_data_manifest();
  const std::string hash = stage_hash("extract");
  std::vector<std::string> artifacts;
  for (BackboneId id : kCanonicalBackbones) {
    const ModelArtifact artifact = load_artifact(run_dir_ / model_dir(id));
    for (Split split : {Split::kTrain, Split::kTest}) {
      const std::vector<ImageRecord> records = records_of(data, split);
      std::vector<std::string> ids;
      for (const auto& r : records) ids.push_back(r.record_id);
      std::vector<double> probabilities;
      const FeatureMatrix features =
          extract_features(artifact.model, RecordImageSource(records), split, ids, &probabilities);
      const std::string path = feature_file(std::string(to_string(id)), split);
      write_features(run_dir_ / path, features, hash);
      artifacts.push_back(path);
      if (split == Split::kTest) {
        const Json scores = {{"backbone", std::string(to_string(id))},
                             {"record_ids", ids},
                             {"probabilities", probabilities},
                             {"config_hash", hash}};
        io::write_text_file(run_dir_ / scores_file(id), scores.dump(1) + "\n");
        artifacts.push_back(scores_file(id));
      }
      log() << "[extract] " << to_string(id) << " " << to_string(split) << ": " << features.rows() << "x"
            << features.cols() << "\n";
    }
  }
  complete("extract", artifacts);
  return true;
}

bool Pipeline::fuse() {
  require_current("extract");
  if (decide("fuse") == Decision::kSkip) return false;
  const std::string hash = stage_hash("fuse");
  std::vector<std::string> artifacts{"fusion/fusion.json"};
  std::vector<FeatureMatrix> train, test;
  for (BackboneId id : kCanonicalBackbones) {
    train.push_back(read_features(run_dir_ / feature_file(std::string(to_string(id)), Split::kTrain)));
    test.push_back(read_features(run_dir_ / feature_file(std::string(to_string(id)), Split::kTest)));
  }
  const FusionArtifact fusion = fit_fusion(train, config_.fusion);
  save_fusion(fusion, run_dir_ / "fusion" / "fusion.json");
  for (const auto& part : fusion.parts) {
    if (part.pca) {
      log() << "[fuse] " << to_string(part.backbone) << ": " << part.pca->d() << " -> " << part.pca->k()
            << " components (" << part.pca->explained_variance_ratio.sum() * 100.0 << "% variance)\n";
    }
  }
  for (auto& [split, raw] : {std::pair{Split::kTrain, &train}, std::pair{Split::kTest, &test}}) {
    const FeatureMatrix stacked = apply_fusion(fusion, *raw);
    const std::string path = feature_file("stacked", split);
    write_features(run_dir_ / path, stacked, hash);
    artifacts.push_back(path);
  }
  log() << "[fuse] stacked width " << fusion.stacked_width() << "\n";
  complete("fuse", artifacts);
  return true;
}

bool Pipeline::fit_svc() {
  require_current("fuse");
  if (decide("fit-svc") == Decision::kSkip) return false;
  const DatasetManifest data = load_data_manifest();
  const FeatureMatrix train = read_features(run_dir_ / feature_file("stacked", Split::kTrain));
  const std::vector<int> labels = labels_for(data, train.provenance.record_ids);
  const SvcModel model = hybridct::fit_svc(train, labels, config_.svc);
  save_svc(model, run_dir_ / "svc");
  const std::vector<int> fitted = predict(model, train);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += fitted[i] == labels[i];
  log() << "[fit-svc] " << model.support_count() << " support vectors, " << model.iterations << " iterations, gamma "
        << model.gamma << ", training accuracy " << format_percent(static_cast<double>(correct) / labels.size()) << "%\n";
  complete("fit-svc", {"svc/svc.bin", "svc/svc.json"});
  return true;
}

bool Pipeline::evaluate() {
  require_current("fit-svc");
  if (decide("evaluate") == Decision::kSkip) return false;
  const DatasetManifest data = load_data_manifest();
  const std::string hash = config_hash(config_);
  std::vector<EvalReport> reports;
  std::vector<std::string> artifacts;

  for (BackboneId id : kCanonicalBackbones) {
    const Json scores = parse_json_text(io::read_text_file(run_dir_ / scores_file(id)), scores_file(id));
    const auto ids = scores.at("record_ids").get<std::vector<std::string>>();
    const auto probabilities = scores.at("probabilities").get<std::vector<double>>();
    require(ids.size() == probabilities.size(), ErrorCode::kIntegrity, scores_file(id) + ": length mismatch");
    const std::vector<int> y_true = labels_for(data, ids);
    std::vector<int> y_pred;
    for (double p : probabilities) y_pred.push_back(p > 0.5 ? 1 : 0);
    EvalReport r = make_report(std::string(display_name(id)), y_true, y_pred, probabilities, hash);
    r.metadata = {{"score", "sigmoid probability"}, {"threshold", "0.5"}};
    reports.push_back(std::move(r));
  }

  const FeatureMatrix test = read_features(run_dir_ / feature_file("stacked", Split::kTest));
  const SvcModel svc = load_svc(run_dir_ / "svc");
  const std::vector<int> y_true = labels_for(data, test.provenance.record_ids);
  const std::vector<double> scores = decision_score(svc, test);
  std::vector<int> y_pred;
  for (double s : scores) y_pred.push_back(label_from_score(s));
  EvalReport hybrid = make_report("Hybrid", y_true, y_pred, scores, hash);
  hybrid.metadata = {{"score", "SVC decision function"}, {"threshold", "0"}};
  reports.push_back(std::move(hybrid));

  Json summary = Json::object();
  for (const EvalReport& r : reports) {
    std::string key = r.model;
    for (char& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const fs::path dir = fs::path("report") / key;
    render_report(r, run_dir_ / dir);
    for (const char* f : {"metrics.txt", "confusion_matrix.svg", "roc.svg", "report.json"})
      artifacts.push_back((dir / f).string());
    summary[key] = {{"accuracy", r.accuracy},
                    {"weighted_precision", r.weighted.precision},
                    {"weighted_recall", r.weighted.recall},
                    {"weighted_f1", r.weighted.f1},
                    {"auc", *r.auc}};
  }
  render_comparison(reports, run_dir_ / "report");
  artifacts.push_back("report/comparison.txt");
  artifacts.push_back("report/roc_comparison.svg");
  log() << render_tables(reports);
  manifest_.summary = summary;
  complete("evaluate", artifacts);
  return true;
}

void Pipeline::run_all() {
  // Errors leave run_all tagged with the stage that raised them.
  auto step = [](const std::string& stage, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with("[")) throw;
      throw Error(e.code(), "[" + stage + "] " + e.what());
    }
  };
  step("prepare", [&] { prepare(); });
  for (BackboneId id : kCanonicalBackbones) {
    step("train/" + std::string(to_string(id)), [&] { train(id); });
  }
  step("extract", [&] { extract(); });
  step("fuse", [&] { fuse(); });
  step("fit-svc", [&] { fit_svc(); });
  step("evaluate", [&] { evaluate(); });
  save_manifest();
}

void apply_thread_override() {
  const char* value = std::getenv("HYBRIDCT_THREADS");
  if (!value || !*value) return;
  char* end = nullptr;
  const long n = std::strtol(value, &end, 10);
  require(end && *end == '\0' && n >= 1 && n <= 1024, ErrorCode::kConfig,
          "HYBRIDCT_THREADS must be a positive integer, got '" + std::string(value) + "'");
  Eigen::setNbThreads(static_cast<int>(n));
  cv::setNumThreads(static_cast<int>(n));
}

}  // namespace hybridct
