#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hybridct {

// Dense height x width x channels float tensor, channels fastest (HWC), the
// layout Keras uses for images and convolution activations.
struct Tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::span<float> pixel(int y, int x) {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * channels,
            static_cast<std::size_t>(channels)};
  }

  bool same_shape(const Tensor& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace hybridct
