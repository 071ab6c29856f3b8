#include "hybridct/backbone.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <numeric>

#include "hybridct/binary_io.hpp"
#include "hybridct/cnn.hpp"
#include "hybridct/error.hpp"
#include "hybridct/hash.hpp"
#include "hybridct/rng.hpp"

namespace hybridct {

namespace fs = std::filesystem;
using cnn::Padding;

std::string_view to_string(BackboneId id) {
  switch (id) {
    case BackboneId::kVgg16: return "vgg16";
    case BackboneId::kDenseNet121: return "densenet121";
    case BackboneId::kMobileNetV2: return "mobilenetv2";
  }
  return "unknown";
}

std::string_view display_name(BackboneId id) {
  switch (id) {
    case BackboneId::kVgg16: return "VGG16";
    case BackboneId::kDenseNet121: return "DenseNet121";
    case BackboneId::kMobileNetV2: return "MobileNetV2";
  }
  return "unknown";
}

BackboneId parse_backbone(std::string_view text) {
  std::string lowered;
  for (char c : text) {
    if (c == '_' || c == '-') continue;
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (BackboneId id : kCanonicalBackbones)
    if (lowered == to_string(id)) return id;
  fail(ErrorCode::kConfig, "unknown backbone '" + std::string(text) +
                               "' (expected vgg16, densenet121 or mobilenetv2)");
}

std::size_t ParamTensor::count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

ParamTensor& ParamStore::add(std::string name, std::vector<int> shape, ParamKind kind) {
  require(!contains(name), ErrorCode::kConfig, "duplicate parameter " + name);
  index_.emplace(name, tensors_.size());
  tensors_.push_back({std::move(name), std::move(shape), kind, {}});
  return tensors_.back();
}

const ParamTensor& ParamStore::get(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::kIntegrity, "missing parameter " + std::string(name));
  return tensors_[it->second];
}

ParamTensor& ParamStore::get(std::string_view name) {
  return const_cast<ParamTensor&>(std::as_const(*this).get(name));
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParamStore::count(ParamKind kind) const {
  std::size_t total = 0;
  for (const auto& t : tensors_)
    if (t.kind == kind) total += t.count();
  return total;
}

std::size_t ParamStore::count() const {
  return count(ParamKind::kWeight) + count(ParamKind::kMovingStatistic);
}

std::uint64_t ParamStore::digest() const {
  Fnv1a64 hash;
  for (const auto& t : tensors_) {
    hash.update(t.name);
    hash.update(std::as_bytes(std::span(t.shape)));
    hash.update(std::as_bytes(std::span(t.values)));
  }
  return hash.digest();
}

std::string WeightsSource::describe() const {
  return kind == Kind::kImagenet ? "imagenet" : "random:" + std::to_string(seed);
}

WeightsSource WeightsSource::parse(std::string_view text) {
  if (text == "imagenet") return imagenet();
  if (text.starts_with("random")) {
    if (text == "random") return random(0);
    if (text.size() > 7 && text[6] == ':') {
      const std::string digits(text.substr(7));
      char* end = nullptr;
      const auto seed = std::strtoull(digits.c_str(), &end, 10);
      if (end && *end == '\0' && !digits.empty()) return random(seed);
    }
  }
  fail(ErrorCode::kConfig,
       "invalid weights source '" + std::string(text) + "' (expected imagenet or random:<seed>)");
}

fs::path weights_cache_dir() {
  if (const char* dir = std::getenv("HYBRIDCT_WEIGHTS_DIR"); dir && *dir) return dir;
  const char* home = std::getenv("HOME");
  return fs::path(home ? home : ".") / ".cache" / "hybridct" / "weights";
}

fs::path imagenet_weights_path(BackboneId id) {
  return weights_cache_dir() / (std::string(to_string(id)) + "_imagenet.hctw");
}

namespace {

// Runs an architecture definition either to declare parameters (shapes only,
// tensors carry dimensions but no data) or to execute a forward pass.
class Graph {
 public:
  Graph(ParamStore* declare, const ParamStore* weights) : declare_(declare), weights_(weights) {}

  bool declaring() const { return declare_ != nullptr; }

  Tensor conv(const Tensor& x, const std::string& name, int filters, int kernel, int stride,
              Padding padding, bool use_bias) {
    if (declaring()) {
      declare_->add(name + "/kernel", {kernel, kernel, x.channels, filters}, ParamKind::kWeight);
      if (use_bias) declare_->add(name + "/bias", {filters}, ParamKind::kWeight);
      const int extent_h = padding == Padding::kSame ? (x.height + stride - 1) / stride
                                                     : (x.height - kernel) / stride + 1;
      const int extent_w = padding == Padding::kSame ? (x.width + stride - 1) / stride
                                                     : (x.width - kernel) / stride + 1;
      return shape(extent_h, extent_w, filters);
    }
    const cnn::Conv2dSpec spec{kernel, kernel, filters, stride, padding};
    const auto& k = weights_->get(name + "/kernel").values;
    if (use_bias) return cnn::conv2d(x, spec, k, weights_->get(name + "/bias").values);
    return cnn::conv2d(x, spec, k);
  }

  Tensor depthwise(const Tensor& x, const std::string& name, int stride, Padding padding) {
    if (declaring()) {
      declare_->add(name + "/kernel", {3, 3, x.channels, 1}, ParamKind::kWeight);
      const int h = padding == Padding::kSame ? (x.height + stride - 1) / stride
                                              : (x.height - 3) / stride + 1;
      const int w = padding == Padding::kSame ? (x.width + stride - 1) / stride
                                              : (x.width - 3) / stride + 1;
      return shape(h, w, x.channels);
    }
    return cnn::depthwise_conv2d(x, 3, stride, padding,
                                 weights_->get(name + "/kernel").values);
  }

  Tensor bn(Tensor x, const std::string& name, float epsilon) {
    if (declaring()) {
      declare_->add(name + "/gamma", {x.channels}, ParamKind::kWeight);
      declare_->add(name + "/beta", {x.channels}, ParamKind::kWeight);
      declare_->add(name + "/moving_mean", {x.channels}, ParamKind::kMovingStatistic);
      declare_->add(name + "/moving_variance", {x.channels}, ParamKind::kMovingStatistic);
      return x;
    }
    cnn::batch_norm_inplace(x, {weights_->get(name + "/gamma").values,
                                weights_->get(name + "/beta").values,
                                weights_->get(name + "/moving_mean").values,
                                weights_->get(name + "/moving_variance").values, epsilon});
    return x;
  }

  Tensor relu(Tensor x) {
    if (!declaring()) cnn::relu_inplace(x);
    return x;
  }

  Tensor relu6(Tensor x) {
    if (!declaring()) cnn::relu6_inplace(x);
    return x;
  }

  Tensor pad(const Tensor& x, int top, int bottom, int left, int right) {
    if (declaring()) return shape(x.height + top + bottom, x.width + left + right, x.channels);
    return cnn::zero_pad(x, top, bottom, left, right);
  }

  Tensor max_pool(const Tensor& x, int window, int stride) {
    if (declaring())
      return shape((x.height - window) / stride + 1, (x.width - window) / stride + 1, x.channels);
    return cnn::max_pool(x, window, stride);
  }

  Tensor avg_pool(const Tensor& x, int window, int stride) {
    if (declaring())
      return shape((x.height - window) / stride + 1, (x.width - window) / stride + 1, x.channels);
    return cnn::average_pool(x, window, stride);
  }

  Tensor concat(const Tensor& a, const Tensor& b) {
    if (declaring()) return shape(a.height, a.width, a.channels + b.channels);
    return cnn::concat_channels(a, b);
  }

  Tensor add(Tensor a, const Tensor& b) {
    if (!declaring()) cnn::add_inplace(a, b);
    return a;
  }

  static Tensor shape(int h, int w, int c) {
    Tensor t;
    t.height = h;
    t.width = w;
    t.channels = c;
    return t;
  }

 private:
  ParamStore* declare_;
  const ParamStore* weights_;
};

Tensor vgg16(Graph& g, Tensor x) {
  const std::array<std::pair<int, int>, 5> blocks = {{{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b + 1);
    for (int i = 0; i < blocks[b].first; ++i) {
      x = g.conv(x, prefix + "_conv" + std::to_string(i + 1), blocks[b].second, 3, 1,
                 Padding::kSame, true);
      x = g.relu(std::move(x));
    }
    x = g.max_pool(x, 2, 2);
  }
  return x;
}

constexpr float kDenseNetEpsilon = 1.001e-5f;

Tensor densenet_conv_block(Graph& g, const Tensor& x, const std::string& name) {
  Tensor y = g.bn(x, name + "_0_bn", kDenseNetEpsilon);
  y = g.relu(std::move(y));
  y = g.conv(y, name + "_1_conv", 4 * 32, 1, 1, Padding::kValid, false);
  y = g.bn(std::move(y), name + "_1_bn", kDenseNetEpsilon);
  y = g.relu(std::move(y));
  y = g.conv(y, name + "_2_conv", 32, 3, 1, Padding::kSame, false);
  return g.concat(x, y);
}

Tensor densenet_transition(Graph& g, Tensor x, const std::string& name) {
  x = g.bn(std::move(x), name + "_bn", kDenseNetEpsilon);
  x = g.relu(std::move(x));
  x = g.conv(x, name + "_conv", x.channels / 2, 1, 1, Padding::kValid, false);
  return g.avg_pool(x, 2, 2);
}

Tensor densenet121(Graph& g, Tensor x) {
  x = g.pad(x, 3, 3, 3, 3);
  x = g.conv(x, "conv1_conv", 64, 7, 2, Padding::kValid, false);
  x = g.bn(std::move(x), "conv1_bn", kDenseNetEpsilon);
  x = g.relu(std::move(x));
  x = g.pad(x, 1, 1, 1, 1);
  x = g.max_pool(x, 3, 2);
  const std::array<int, 4> blocks = {6, 12, 24, 16};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string stage = "conv" + std::to_string(b + 2);
    for (int i = 0; i < blocks[b]; ++i)
      x = densenet_conv_block(g, x, stage + "_block" + std::to_string(i + 1));
    if (b + 1 < blocks.size()) x = densenet_transition(g, std::move(x), "pool" + std::to_string(b + 2));
  }
  x = g.bn(std::move(x), "bn", kDenseNetEpsilon);
  return g.relu(std::move(x));
}

constexpr float kMobileNetEpsilon = 1e-3f;

Tensor inverted_residual(Graph& g, const Tensor& input, int filters, int stride, int expansion,
                         int block_id) {
  std::string prefix = "block_" + std::to_string(block_id) + "_";
  Tensor x = input;
  if (block_id) {
    x = g.conv(x, prefix + "expand", expansion * input.channels, 1, 1, Padding::kSame, false);
    x = g.bn(std::move(x), prefix + "expand_BN", kMobileNetEpsilon);
    x = g.relu6(std::move(x));
  } else {
    prefix = "expanded_conv_";
  }
  if (stride == 2) {
    // Keras correct_pad for a 3x3 kernel: even inputs pad only bottom/right.
    const int adjust_h = 1 - x.height % 2;
    const int adjust_w = 1 - x.width % 2;
    x = g.pad(x, 1 - adjust_h, 1, 1 - adjust_w, 1);
  }
  x = g.depthwise(x, prefix + "depthwise", stride, stride == 1 ? Padding::kSame : Padding::kValid);
  x = g.bn(std::move(x), prefix + "depthwise_BN", kMobileNetEpsilon);
  x = g.relu6(std::move(x));
  x = g.conv(x, prefix + "project", filters, 1, 1, Padding::kSame, false);
  x = g.bn(std::move(x), prefix + "project_BN", kMobileNetEpsilon);
  if (input.channels == filters && stride == 1) return g.add(std::move(x), input);
  return x;
}

Tensor mobilenetv2(Graph& g, Tensor x) {
  x = g.conv(x, "Conv1", 32, 3, 2, Padding::kSame, false);
  x = g.bn(std::move(x), "bn_Conv1", kMobileNetEpsilon);
  x = g.relu6(std::move(x));
  struct Block {
    int filters, stride, expansion;
  };
  const std::array<Block, 17> blocks = {{{16, 1, 1},
                                         {24, 2, 6}, {24, 1, 6},
                                         {32, 2, 6}, {32, 1, 6}, {32, 1, 6},
                                         {64, 2, 6}, {64, 1, 6}, {64, 1, 6}, {64, 1, 6},
                                         {96, 1, 6}, {96, 1, 6}, {96, 1, 6},
                                         {160, 2, 6}, {160, 1, 6}, {160, 1, 6},
                                         {320, 1, 6}}};
  for (std::size_t i = 0; i < blocks.size(); ++i)
    x = inverted_residual(g, x, blocks[i].filters, blocks[i].stride, blocks[i].expansion,
                          static_cast<int>(i));
  x = g.conv(x, "Conv_1", 1280, 1, 1, Padding::kValid, false);
  x = g.bn(std::move(x), "Conv_1_bn", kMobileNetEpsilon);
  return g.relu6(std::move(x));
}

Tensor run_architecture(BackboneId id, Graph& g, Tensor x) {
  switch (id) {
    case BackboneId::kVgg16: return vgg16(g, std::move(x));
    case BackboneId::kDenseNet121: return densenet121(g, std::move(x));
    case BackboneId::kMobileNetV2: return mobilenetv2(g, std::move(x));
  }
  fail(ErrorCode::kConfig, "unknown backbone");
}

Tensor scale_input(BackboneId id, const Tensor& image, InputScaling scaling) {
  if (scaling == InputScaling::kUnit) return image;
  Tensor x = image;
  const std::size_t pixels = x.pixels();
  switch (id) {
    case BackboneId::kVgg16: {
      // caffe mode: RGB->BGR on the 0-255 scale, minus the ImageNet BGR mean.
      const float mean[3] = {103.939f, 116.779f, 123.68f};
      for (std::size_t p = 0; p < pixels; ++p) {
        float* v = x.data.data() + p * 3;
        const float r = v[0] * 255.0f, gch = v[1] * 255.0f, b = v[2] * 255.0f;
        v[0] = b - mean[0];
        v[1] = gch - mean[1];
        v[2] = r - mean[2];
      }
      break;
    }
    case BackboneId::kDenseNet121: {
      const float mean[3] = {0.485f, 0.456f, 0.406f};
      const float stdev[3] = {0.229f, 0.224f, 0.225f};
      for (std::size_t p = 0; p < pixels; ++p)
        for (int c = 0; c < 3; ++c) {
          float& v = x.data[p * 3 + c];
          v = (v - mean[c]) / stdev[c];
        }
      break;
    }
    case BackboneId::kMobileNetV2:
      for (float& v : x.data) v = v * 2.0f - 1.0f;
      break;
  }
  return x;
}

}  // namespace

Backbone Backbone::architecture(BackboneId id) {
  ParamStore params;
  Graph g(&params, nullptr);
  const Tensor out = run_architecture(id, g, Graph::shape(kInputSize, kInputSize, 3));
  return Backbone(id, std::move(params), out.channels);
}

Tensor Backbone::forward(const Tensor& image, InputScaling scaling) const {
  require(image.height == kInputSize && image.width == kInputSize && image.channels == 3 &&
              image.data.size() == image.pixels() * 3,
          ErrorCode::kInput,
          "backbone input must be 224x224x3, got " + std::to_string(image.height) + "x" +
              std::to_string(image.width) + "x" + std::to_string(image.channels));
  Graph g(nullptr, &params_);
  return run_architecture(id_, g, scale_input(id_, image, scaling));
}

std::vector<float> Backbone::pooled_features(const Tensor& image, InputScaling scaling) const {
  return cnn::global_average_pool(forward(image, scaling));
}

void randomize_weights(ParamStore& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& t : params.tensors()) {
    t.values.assign(t.count(), 0.0f);
    const std::string_view name = t.name;
    if (name.ends_with("/kernel")) {
      // He-normal: fan_in = kh * kw * in_channels (kh * kw for depthwise).
      const bool depthwise = name.ends_with("depthwise/kernel");
      const double fan_in = static_cast<double>(t.shape[0]) * t.shape[1] * (depthwise ? 1 : t.shape[2]);
      const double stddev = std::sqrt(2.0 / fan_in);
      for (float& v : t.values) v = static_cast<float>(rng.normal() * stddev);
    } else if (name.ends_with("/gamma") || name.ends_with("/moving_variance")) {
      std::fill(t.values.begin(), t.values.end(), 1.0f);
    }
  }
}

void write_weights(const fs::path& path, const ParamStore& params) {
  io::ByteWriter w;
  w.put_magic("HCTW1");
  w.put_u32(static_cast<std::uint32_t>(params.tensors().size()));
  for (const auto& t : params.tensors()) {
    require(t.values.size() == t.count(), ErrorCode::kIntegrity,
            "parameter " + t.name + " has no values to write");
    w.put_string(t.name);
    w.put_u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.put_u32(static_cast<std::uint32_t>(d));
    w.put_array(std::span<const float>(t.values));
  }
  w.put_u64(fnv1a64(std::span(w.bytes())));
  io::write_file(path, w.bytes());
}

void read_weights(const fs::path& path, ParamStore& params) {
  const auto bytes = io::read_file(path);
  require(bytes.size() >= 13, ErrorCode::kIntegrity, path.string() + ": truncated weights file");
  const auto body = std::span<const std::byte>(bytes).first(bytes.size() - 8);
  io::ByteReader tail(std::span<const std::byte>(bytes).last(8), path.string());
  require(tail.get_u64() == fnv1a64(body), ErrorCode::kIntegrity,
          path.string() + ": weights checksum mismatch");
  io::ByteReader r(body, path.string());
  if (!r.expect_magic("HCTW1"))
    fail(ErrorCode::kVersionMismatch, path.string() + ": not an HCTW1 weights file");
  const std::uint32_t count = r.get_u32();
  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.get_string();
    std::vector<int> shape(r.get_u32());
    for (int& d : shape) d = static_cast<int>(r.get_u32());
    if (!params.contains(name)) fail(ErrorCode::kIntegrity, path.string() + ": unexpected tensor " + name);
    ParamTensor& t = params.get(name);
    require(shape == t.shape, ErrorCode::kIntegrity, path.string() + ": shape mismatch for " + name);
    t.values.resize(t.count());
    r.get_array(std::span<float>(t.values));
    ++filled;
  }
  require(filled == params.tensors().size(), ErrorCode::kIntegrity,
          path.string() + ": weights file covers " + std::to_string(filled) + " of " +
              std::to_string(params.tensors().size()) + " tensors");
}

std::shared_ptr<const Backbone> load_backbone(BackboneId id, const WeightsSource& source) {
  // Frozen backbones are immutable; share one instance per (id, source).
  static std::mutex mutex;
  static std::map<std::string, std::weak_ptr<const Backbone>> cache;
  const std::string key = std::string(to_string(id)) + "@" + source.describe();
  std::lock_guard lock(mutex);
  if (auto cached = cache[key].lock()) return cached;

  Backbone backbone = Backbone::architecture(id);
  if (source.kind == WeightsSource::Kind::kRandom) {
    randomize_weights(backbone.mutable_params(),
                      source.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(id) + 1);
  } else {
    const fs::path path = imagenet_weights_path(id);
    if (!fs::exists(path)) {
      fail(ErrorCode::kWeightsUnavailable,
           "ImageNet weights for " + std::string(display_name(id)) + " not found at " +
               path.string() +
               ". Convert them once with `python3 tools/export_keras_weights.py --out " +
               weights_cache_dir().string() +
               "` on a machine with network access (or set HYBRIDCT_WEIGHTS_DIR), or use "
               "weights = \"random:<seed>\" for offline runs.");
    }
    read_weights(path, backbone.mutable_params());
  }
  auto shared = std::make_shared<const Backbone>(std::move(backbone));
  cache[key] = shared;
  return shared;
}

}  // namespace hybridct
