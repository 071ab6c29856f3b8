#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hybridct/augmentation.hpp"
#include "hybridct/backbone.hpp"
#include "hybridct/callbacks.hpp"
#include "hybridct/data_ingest.hpp"
#include "hybridct/head.hpp"

namespace hybridct {

// Fine-tuning regime. Loss is binary cross-entropy and the monitored
// quantity is validation loss; neither is configurable.
struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 20;
  int batch_size = 8;
  int early_stop_patience = 5;
  bool restore_best_weights = true;
  double lr_reduce_factor = 0.5;
  int lr_plateau_patience = 3;
  double lr_min = 1e-6;
  double min_delta = 1e-4;
  std::uint64_t seed = 42;

  void validate() const;
  CallbackSchedule schedule() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ParamCounts {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t frozen = 0;    // everything not updated by training
  std::size_t backbone = 0;  // the trunk alone, as published for the architecture
  std::size_t head_trainable = 0;
  double reduction_factor = 1.0;  // trainable-if-unfrozen / trainable-as-built

  friend bool operator==(const ParamCounts&, const ParamCounts&) = default;
};

// A frozen backbone plus its trainable head.
class Model {
 public:
  Model(std::shared_ptr<const Backbone> backbone, HeadConfig head_config, HeadState head,
        WeightsSource weights, InputScaling scaling, bool backbone_frozen);

  const Backbone& backbone() const { return *backbone_; }
  std::shared_ptr<const Backbone> shared_backbone() const { return backbone_; }
  BackboneId id() const { return backbone_->id(); }
  const HeadConfig& head_config() const { return head_config_; }
  const HeadState& head() const { return head_; }
  HeadState& mutable_head() { return head_; }
  const WeightsSource& weights_source() const { return weights_; }
  InputScaling input_scaling() const { return scaling_; }
  bool backbone_frozen() const { return backbone_frozen_; }

  // Pooled backbone activations for one preprocessed 224x224x3 image.
  std::vector<float> pooled(const Tensor& image) const;
  // Head evaluated in inference mode on pooled activations.
  HeadOutput infer_pooled(std::span<const float> pooled) const { return head_forward(head_, pooled); }
  HeadOutput infer(const Tensor& image) const { return infer_pooled(pooled(image)); }

 private:
  std::shared_ptr<const Backbone> backbone_;
  HeadConfig head_config_;
  HeadState head_;
  WeightsSource weights_;
  InputScaling scaling_;
  bool backbone_frozen_;
};

struct BuildOptions {
  WeightsSource weights = WeightsSource::imagenet();
  InputScaling scaling = InputScaling::kUnit;
  std::uint64_t head_seed = 42;
  bool freeze_backbone = true;
};

Model build_model(BackboneId id, const HeadConfig& head_config, const BuildOptions& options = {});

// Keras-style accounting: batch-norm moving statistics are non-trainable
// parameters.
ParamCounts count_parameters(const Model& model);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool early_stopped = false;
  friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;
};

struct ModelArtifact {
  Model model;
  TrainConfig train_config;
  AugmentationConfig augmentation;
  TrainingHistory history;
  ParamCounts param_counts;
};

// Random-access labeled images, already decoded and scaled to [0,1].
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t index) const = 0;  // COVID = 1
  virtual Tensor image(std::size_t index) const = 0;
};

class RecordImageSource final : public ImageSource {
 public:
  explicit RecordImageSource(std::vector<ImageRecord> records) : records_(std::move(records)) {}
  std::size_t size() const override { return records_.size(); }
  int label(std::size_t index) const override { return label_value(records_[index].label); }
  Tensor image(std::size_t index) const override { return load_image(records_[index]).pixels; }
  const std::vector<ImageRecord>& records() const { return records_; }

 private:
  std::vector<ImageRecord> records_;
};

class MemoryImageSource final : public ImageSource {
 public:
  MemoryImageSource(std::vector<Tensor> images, std::vector<int> labels)
      : images_(std::move(images)), labels_(std::move(labels)) {}
  std::size_t size() const override { return images_.size(); }
  int label(std::size_t index) const override { return labels_[index]; }
  Tensor image(std::size_t index) const override { return images_[index]; }

 private:
  std::vector<Tensor> images_;
  std::vector<int> labels_;
};

struct TrainOptions {
  // Written whenever validation loss improves.
  std::filesystem::path checkpoint_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Fine-tunes the head on augmented TRAIN images (resampled every epoch),
// monitoring loss on the un-augmented VAL images. Early stopping, plateau
// learning-rate reduction and best-weight restoration follow `config`.
ModelArtifact train(Model model, const ImageSource& train_images, const ImageSource& val_images,
                    const AugmentationConfig& augmentation, const TrainConfig& config,
                    const TrainOptions& options = {});

// Sigmoid outputs, one per image; threshold 0.5 gives the label.
std::vector<double> predict_proba(const Model& model, std::span<const Tensor> images);

// Artifact directory: model.json (configs, history, counts, backbone
// digest) and head.hctm (head tensors with checksum). Backbone weights are
// rebuilt from the recorded source on load and verified by digest.
void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& dir);
ModelArtifact load_artifact(const std::filesystem::path& dir);

inline constexpr int kArtifactFormatVersion = 1;

}  // namespace hybridct
