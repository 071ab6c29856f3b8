#include "hybridct/transfer.hpp"

#include <cmath>
#include <numeric>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/hash.hpp"
#include "hybridct/json_io.hpp"
#include "hybridct/rng.hpp"

namespace hybridct {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  require(learning_rate > 0, ErrorCode::kConfig, "learning_rate must be positive");
  require(epochs >= 1, ErrorCode::kConfig, "epochs must be at least 1");
  require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be at least 1");
  require(early_stop_patience >= 1 && lr_plateau_patience >= 1, ErrorCode::kConfig,
          "callback patience must be at least 1");
  require(lr_reduce_factor > 0 && lr_reduce_factor < 1, ErrorCode::kConfig,
          "lr_reduce_factor must lie in (0, 1)");
  require(lr_min > 0 && lr_min <= learning_rate, ErrorCode::kConfig,
          "lr_min must be positive and no larger than learning_rate");
  require(min_delta >= 0, ErrorCode::kConfig, "min_delta must be non-negative");
}

CallbackSchedule TrainConfig::schedule() const {
  return {learning_rate, epochs, early_stop_patience, min_delta, lr_reduce_factor, lr_plateau_patience, lr_min};
}

Model::Model(std::shared_ptr<const Backbone> backbone, HeadConfig head_config, HeadState head,
             WeightsSource weights, InputScaling scaling, bool backbone_frozen)
    : backbone_(std::move(backbone)),
      head_config_(head_config),
      head_(std::move(head)),
      weights_(weights),
      scaling_(scaling),
      backbone_frozen_(backbone_frozen) {
  require(backbone_ != nullptr, ErrorCode::kConfig, "model requires a backbone");
  require(head_.input_width == backbone_->feature_width(), ErrorCode::kIntegrity,
          "head input width does not match the backbone feature width");
}

std::vector<float> Model::pooled(const Tensor& image) const {
  return backbone_->pooled_features(image, scaling_);
}

Model build_model(BackboneId id, const HeadConfig& head_config, const BuildOptions& options) {
  head_config.validate();
  auto backbone = load_backbone(id, options.weights);
  HeadState head = HeadState::initialize(backbone->feature_width(), head_config, options.head_seed);
  return Model(std::move(backbone), head_config, std::move(head), options.weights, options.scaling,
               options.freeze_backbone);
}

ParamCounts count_parameters(const Model& model) {
  const ParamStore& trunk = model.backbone().params();
  const std::size_t trunk_weights = trunk.count(ParamKind::kWeight);
  const std::size_t trunk_stats = trunk.count(ParamKind::kMovingStatistic);
  const std::size_t head_weights = model.head().trainable_count();
  const std::size_t head_stats = model.head().statistic_count();

  ParamCounts counts;
  counts.backbone = trunk_weights + trunk_stats;
  counts.head_trainable = head_weights;
  counts.total = counts.backbone + head_weights + head_stats;
  counts.trainable = head_weights + (model.backbone_frozen() ? 0 : trunk_weights);
  counts.frozen = counts.total - counts.trainable;
  counts.reduction_factor =
      static_cast<double>(trunk_weights + head_weights) / static_cast<double>(counts.trainable);
  return counts;
}

namespace {

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate_pooled(const HeadState& head, const std::vector<std::vector<float>>& pooled,
                           const std::vector<int>& labels) {
  Evaluation e;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const HeadOutput out = head_forward(head, pooled[i]);
    e.loss += binary_cross_entropy_from_logit(out.logit, labels[i]);
    if ((out.probability > 0.5 ? 1 : 0) == labels[i]) ++correct;
  }
  e.loss /= static_cast<double>(pooled.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(pooled.size());
  return e;
}

void check_labels(const ImageSource& source, const char* what) {
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int y = source.label(i);
    require(y == 0 || y == 1, ErrorCode::kInput, std::string(what) + " labels must be 0 or 1");
  }
}

}  // namespace

ModelArtifact train(Model model, const ImageSource& train_images, const ImageSource& val_images,
                    const AugmentationConfig& augmentation, const TrainConfig& config,
                    const TrainOptions& options) {
  config.validate();
  augmentation.validate();
  require(model.backbone_frozen(), ErrorCode::kConfig,
          "training updates the head only; the backbone must be frozen");
  require(train_images.size() > 0, ErrorCode::kInput, "empty training stream");
  require(val_images.size() > 0, ErrorCode::kInput,
          "validation set is empty; validation loss is required for the callbacks");
  check_labels(train_images, "training");
  check_labels(val_images, "validation");

  const int width = model.backbone().feature_width();
  Rng rng(config.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(model.id()) + 1);

  // The backbone is frozen and VAL is never augmented, so its pooled
  // activations are fixed for the whole run.
  std::vector<std::vector<float>> val_pooled(val_images.size());
  std::vector<int> val_labels(val_images.size());
  for (std::size_t i = 0; i < val_images.size(); ++i) {
    val_pooled[i] = model.pooled(val_images.image(i));
    val_labels[i] = val_images.label(i);
  }

  ModelArtifact artifact{model, config, augmentation, {}, count_parameters(model)};
  HeadState& head = artifact.model.mutable_head();
  HeadState best = head;
  AdamOptimizer adam(head);
  EarlyStopping stopper(config.early_stop_patience, config.min_delta);
  ReduceLrOnPlateau reducer(config.lr_reduce_factor, config.lr_plateau_patience, config.min_delta,
                            config.lr_min);
  const double dropout = model.head_config().dropout_rate;
  double lr = config.learning_rate;

  std::vector<std::size_t> order(train_images.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::size_t batch = end - start;
      std::vector<float> pooled;
      pooled.reserve(batch * static_cast<std::size_t>(width));
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const AugmentParams params = sample_params(augmentation, rng, kInputSize, kInputSize);
        const Tensor augmented =
            apply_augmentation(train_images.image(order[k]), params, augmentation.fill_mode);
        const auto features = model.pooled(augmented);
        pooled.insert(pooled.end(), features.begin(), features.end());
        labels.push_back(train_images.label(order[k]));
      }
      std::vector<double> mask;
      if (dropout > 0.0) {
        mask.resize(pooled.size());
        const double keep_scale = 1.0 / (1.0 - dropout);
        for (double& m : mask) m = rng.uniform01() < dropout ? 0.0 : keep_scale;
      }
      const HeadStepResult step = head_train_step(head, pooled, labels, mask);
      if (!std::isfinite(step.loss)) {
        fail(ErrorCode::kNumeric, "non-finite training loss in epoch " + std::to_string(epoch) +
                                      " (learning rate " + std::to_string(lr) + ")");
      }
      adam.apply(head, step.gradients, lr);
      update_moving_statistics(head, step);
      loss_sum += step.loss * static_cast<double>(batch);
      correct += step.correct;
    }

    const Evaluation val = evaluate_pooled(head, val_pooled, val_labels);
    require(std::isfinite(val.loss), ErrorCode::kNumeric,
            "non-finite validation loss in epoch " + std::to_string(epoch));
    EpochRecord record{epoch,
                       loss_sum / static_cast<double>(order.size()),
                       static_cast<double>(correct) / static_cast<double>(order.size()),
                       val.loss,
                       val.accuracy,
                       lr};
    artifact.history.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);

    const bool stop = stopper.on_epoch_end(epoch, val.loss);
    if (stopper.improved()) {
      best = head;
      artifact.history.best_epoch = epoch;
      if (!options.checkpoint_dir.empty()) {
        ModelArtifact checkpoint = artifact;
        save_artifact(checkpoint, options.checkpoint_dir);
      }
    }
    lr = reducer.on_epoch_end(val.loss, lr);
    if (stop) {
      artifact.history.early_stopped = true;
      break;
    }
  }
  if (config.restore_best_weights) head = best;
  if (!options.checkpoint_dir.empty()) save_artifact(artifact, options.checkpoint_dir);
  return artifact;
}

std::vector<double> predict_proba(const Model& model, std::span<const Tensor> images) {
  std::vector<double> out;
  out.reserve(images.size());
  for (const Tensor& image : images) out.push_back(model.infer(image).probability);
  return out;
}

namespace {

std::string scaling_name(InputScaling s) { return s == InputScaling::kUnit ? "unit" : "imagenet"; }

InputScaling parse_scaling(const std::string& s) {
  if (s == "unit") return InputScaling::kUnit;
  if (s == "imagenet") return InputScaling::kImagenet;
  fail(ErrorCode::kIntegrity, "unknown input scaling '" + s + "'");
}

}  // namespace

void save_artifact(const ModelArtifact& artifact, const fs::path& dir) {
  const Model& model = artifact.model;
  ParamStore head;
  model.head().export_to(head);
  write_weights(dir / "head.hctm", head);

  Json meta = {
      {"format_version", kArtifactFormatVersion},
      {"backbone", std::string(to_string(model.id()))},
      {"weights_source", model.weights_source().describe()},
      {"backbone_digest", to_hex(model.backbone().params().digest())},
      {"input_scaling", scaling_name(model.input_scaling())},
      {"backbone_frozen", model.backbone_frozen()},
      {"head", model.head_config()},
      {"train", artifact.train_config},
      {"augmentation", artifact.augmentation},
      {"param_counts", artifact.param_counts},
      {"history", artifact.history},
      {"head_checksum", to_hex(fnv1a64(std::span<const std::byte>(io::read_file(dir / "head.hctm"))))},
  };
  io::write_text_file(dir / "model.json", meta.dump(2) + "\n");
}

ModelArtifact load_artifact(const fs::path& dir) {
  const fs::path meta_path = dir / "model.json";
  if (!fs::exists(meta_path)) fail(ErrorCode::kNotFound, "no model artifact at " + dir.string());
  const Json meta = parse_json_text(io::read_text_file(meta_path), meta_path.string());
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kArtifactFormatVersion) {
      fail(ErrorCode::kVersionMismatch, meta_path.string() + ": artifact format version " +
                                            std::to_string(version) + ", expected " +
                                            std::to_string(kArtifactFormatVersion));
    }
    const BackboneId id = parse_backbone(meta.at("backbone").get<std::string>());
    const WeightsSource source = WeightsSource::parse(meta.at("weights_source").get<std::string>());
    auto backbone = load_backbone(id, source);
    if (to_hex(backbone->params().digest()) != meta.at("backbone_digest").get<std::string>()) {
      fail(ErrorCode::kIntegrity, dir.string() + ": backbone weights differ from those used in training");
    }
    const auto head_bytes = io::read_file(dir / "head.hctm");
    if (to_hex(fnv1a64(std::span<const std::byte>(head_bytes))) != meta.at("head_checksum").get<std::string>())
      fail(ErrorCode::kIntegrity, dir.string() + ": head weights checksum mismatch");
    const HeadConfig head_config = meta.at("head").get<HeadConfig>();
    ParamStore head_store;
    HeadState::declare(head_store, backbone->feature_width(), head_config.dense_width);
    read_weights(dir / "head.hctm", head_store);

    Model model(std::move(backbone), head_config, HeadState::import_from(head_store), source,
                parse_scaling(meta.at("input_scaling").get<std::string>()),
                meta.at("backbone_frozen").get<bool>());
    return ModelArtifact{std::move(model), meta.at("train").get<TrainConfig>(),
                         meta.at("augmentation").get<AugmentationConfig>(),
                         meta.at("history").get<TrainingHistory>(),
                         meta.at("param_counts").get<ParamCounts>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIntegrity, meta_path.string() + ": malformed artifact metadata: " + e.what());
  }
}

}  // namespace hybridct
