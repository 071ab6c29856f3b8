#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridct/tensor.hpp"

namespace hybridct {

enum class BackboneId { kVgg16, kDenseNet121, kMobileNetV2 };

// Concatenation order of the stacked feature set.
inline constexpr std::array<BackboneId, 3> kCanonicalBackbones = {
    BackboneId::kVgg16, BackboneId::kDenseNet121, BackboneId::kMobileNetV2};

std::string_view to_string(BackboneId id);    // "vgg16", "densenet121", "mobilenetv2"
std::string_view display_name(BackboneId id); // "VGG16", "DenseNet121", "MobileNetV2"
BackboneId parse_backbone(std::string_view text);

inline constexpr int kInputSize = 224;

enum class ParamKind {
  kWeight,           // learnable (kernel, bias, gamma, beta)
  kMovingStatistic,  // batch-norm running mean/variance, never trainable
};

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  ParamKind kind = ParamKind::kWeight;
  std::vector<float> values;

  std::size_t count() const;
};

// Ordered named parameter tensors (declaration order is the serialization
// order).
class ParamStore {
 public:
  ParamTensor& add(std::string name, std::vector<int> shape, ParamKind kind);
  const ParamTensor& get(std::string_view name) const;
  ParamTensor& get(std::string_view name);
  bool contains(std::string_view name) const;

  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  std::vector<ParamTensor>& tensors() { return tensors_; }

  std::size_t count(ParamKind kind) const;
  std::size_t count() const;
  // FNV-1a over names, shapes and raw float bytes.
  std::uint64_t digest() const;

 private:
  std::vector<ParamTensor> tensors_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Where frozen backbone weights come from. kImagenet reads a converted Keras
// ImageNet checkpoint from the weights cache; kRandom draws a seeded He-normal
// initialization for offline runs.
struct WeightsSource {
  enum class Kind { kImagenet, kRandom };
  Kind kind = Kind::kImagenet;
  std::uint64_t seed = 0;

  static WeightsSource imagenet() { return {Kind::kImagenet, 0}; }
  static WeightsSource random(std::uint64_t seed) { return {Kind::kRandom, seed}; }

  std::string describe() const;  // "imagenet" or "random:<seed>"
  static WeightsSource parse(std::string_view text);
  friend bool operator==(const WeightsSource&, const WeightsSource&) = default;
};

// Directory holding `<backbone>_imagenet.hctw`: $HYBRIDCT_WEIGHTS_DIR, else
// ~/.cache/hybridct/weights.
std::filesystem::path weights_cache_dir();
std::filesystem::path imagenet_weights_path(BackboneId id);

// Input normalization applied before the backbone. kUnit feeds the [0,1]
// tensor unchanged; kImagenet applies each architecture's canonical ImageNet
// preprocessing (caffe for VGG16, torch for DenseNet121, tf for MobileNetV2).
enum class InputScaling { kUnit, kImagenet };

// A frozen convolutional trunk without its ImageNet classifier, ending at the
// last activation before global average pooling.
class Backbone {
 public:
  // Architecture with declared (empty) parameter tensors.
  static Backbone architecture(BackboneId id);

  BackboneId id() const { return id_; }
  int feature_width() const { return feature_width_; }
  const ParamStore& params() const { return params_; }
  ParamStore& mutable_params() { return params_; }

  Tensor forward(const Tensor& image, InputScaling scaling = InputScaling::kUnit) const;
  // Global-average-pooled final feature map.
  std::vector<float> pooled_features(const Tensor& image,
                                     InputScaling scaling = InputScaling::kUnit) const;

 private:
  Backbone(BackboneId id, ParamStore params, int feature_width)
      : id_(id), params_(std::move(params)), feature_width_(feature_width) {}

  BackboneId id_;
  ParamStore params_;
  int feature_width_;
};

// Builds a backbone with weights from `source`. Throws kWeightsUnavailable
// (with the conversion command in the message) when ImageNet weights are not
// cached locally.
std::shared_ptr<const Backbone> load_backbone(BackboneId id, const WeightsSource& source);

void randomize_weights(ParamStore& params, std::uint64_t seed);

// HCTW weights file: magic "HCTW1", u32 tensor count, then per tensor name,
// rank, dims and float32 values, followed by a u64 FNV-1a checksum of all
// preceding bytes.
void write_weights(const std::filesystem::path& path, const ParamStore& params);
// Fills the declared tensors of `params` by name; shapes must match.
void read_weights(const std::filesystem::path& path, ParamStore& params);

}  // namespace hybridct
