#include "hybridct/cnn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "hybridct/error.hpp"

namespace hybridct::cnn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

// Output pixels processed per im2col tile; bounds the scratch buffer.
constexpr int kTilePixels = 4096;

int output_extent(int input, int kernel, int stride, Padding padding) {
  if (padding == Padding::kSame) return (input + stride - 1) / stride;
  return (input - kernel) / stride + 1;
}

}  // namespace

PadAmounts same_padding(int input, int kernel, int stride) {
  const int out = (input + stride - 1) / stride;
  const int total = std::max((out - 1) * stride + kernel - input, 0);
  return {total / 2, total - total / 2};
}

Tensor conv2d(const Tensor& input, const Conv2dSpec& spec, std::span<const float> kernel,
              std::span<const float> bias) {
  const int cin = input.channels;
  const int kdim = spec.kernel_h * spec.kernel_w * cin;
  require(kernel.size() == static_cast<std::size_t>(kdim) * spec.out_channels, ErrorCode::kInput,
          "conv2d: kernel size does not match input channels");
  require(bias.empty() || bias.size() == static_cast<std::size_t>(spec.out_channels),
          ErrorCode::kInput, "conv2d: bias size mismatch");

  const int out_h = output_extent(input.height, spec.kernel_h, spec.stride, spec.padding);
  const int out_w = output_extent(input.width, spec.kernel_w, spec.stride, spec.padding);
  require(out_h > 0 && out_w > 0, ErrorCode::kInput, "conv2d: input smaller than kernel");
  const PadAmounts pad_y = spec.padding == Padding::kSame
                               ? same_padding(input.height, spec.kernel_h, spec.stride)
                               : PadAmounts{};
  const PadAmounts pad_x = spec.padding == Padding::kSame
                               ? same_padding(input.width, spec.kernel_w, spec.stride)
                               : PadAmounts{};

  Tensor out(out_h, out_w, spec.out_channels);
  const ConstRowMap weights(kernel.data(), kdim, spec.out_channels);
  const auto total = static_cast<Eigen::Index>(out.pixels());

  const bool pointwise = spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1;
  if (pointwise) {
    const ConstRowMap in(input.data.data(), total, cin);
    RowMap result(out.data.data(), total, spec.out_channels);
    result.noalias() = in * weights;
  } else {
    std::vector<float> patches(static_cast<std::size_t>(std::min<Eigen::Index>(total, kTilePixels)) *
                               kdim);
    for (Eigen::Index start = 0; start < total; start += kTilePixels) {
      const Eigen::Index count = std::min<Eigen::Index>(kTilePixels, total - start);
      for (Eigen::Index p = 0; p < count; ++p) {
        const int oy = static_cast<int>((start + p) / out_w);
        const int ox = static_cast<int>((start + p) % out_w);
        float* row = patches.data() + p * kdim;
        for (int ky = 0; ky < spec.kernel_h; ++ky) {
          const int iy = oy * spec.stride + ky - pad_y.before;
          for (int kx = 0; kx < spec.kernel_w; ++kx) {
            const int ix = ox * spec.stride + kx - pad_x.before;
            float* dst = row + (ky * spec.kernel_w + kx) * cin;
            if (iy < 0 || iy >= input.height || ix < 0 || ix >= input.width) {
              std::fill(dst, dst + cin, 0.0f);
            } else {
              const float* src =
                  input.data.data() + (static_cast<std::size_t>(iy) * input.width + ix) * cin;
              std::copy(src, src + cin, dst);
            }
          }
        }
      }
      const ConstRowMap tile(patches.data(), count, kdim);
      RowMap result(out.data.data() + start * spec.out_channels, count, spec.out_channels);
      result.noalias() = tile * weights;
    }
  }

  if (!bias.empty()) {
    RowMap result(out.data.data(), total, spec.out_channels);
    const Eigen::Map<const Eigen::RowVectorXf> b(bias.data(), spec.out_channels);
    result.rowwise() += b;
  }
  return out;
}

Tensor depthwise_conv2d(const Tensor& input, int kernel_size, int stride, Padding padding,
                        std::span<const float> kernel) {
  const int c = input.channels;
  require(kernel.size() == static_cast<std::size_t>(kernel_size) * kernel_size * c,
          ErrorCode::kInput, "depthwise_conv2d: kernel size mismatch");
  const int out_h = output_extent(input.height, kernel_size, stride, padding);
  const int out_w = output_extent(input.width, kernel_size, stride, padding);
  const PadAmounts pad_y =
      padding == Padding::kSame ? same_padding(input.height, kernel_size, stride) : PadAmounts{};
  const PadAmounts pad_x =
      padding == Padding::kSame ? same_padding(input.width, kernel_size, stride) : PadAmounts{};

  Tensor out(out_h, out_w, c);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      float* dst = out.data.data() + (static_cast<std::size_t>(oy) * out_w + ox) * c;
      for (int ky = 0; ky < kernel_size; ++ky) {
        const int iy = oy * stride + ky - pad_y.before;
        if (iy < 0 || iy >= input.height) continue;
        for (int kx = 0; kx < kernel_size; ++kx) {
          const int ix = ox * stride + kx - pad_x.before;
          if (ix < 0 || ix >= input.width) continue;
          const float* src =
              input.data.data() + (static_cast<std::size_t>(iy) * input.width + ix) * c;
          const float* w = kernel.data() + (ky * kernel_size + kx) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch] * w[ch];
        }
      }
    }
  }
  return out;
}

void batch_norm_inplace(Tensor& x, const BatchNormParams& bn) {
  const int c = x.channels;
  require(bn.gamma.size() == static_cast<std::size_t>(c), ErrorCode::kInput,
          "batch_norm: parameter size mismatch");
  std::vector<float> scale(c), shift(c);
  for (int ch = 0; ch < c; ++ch) {
    scale[ch] = bn.gamma[ch] / std::sqrt(bn.moving_variance[ch] + bn.epsilon);
    shift[ch] = bn.beta[ch] - bn.moving_mean[ch] * scale[ch];
  }
  const std::size_t pixels = x.pixels();
  for (std::size_t p = 0; p < pixels; ++p) {
    float* v = x.data.data() + p * c;
    for (int ch = 0; ch < c; ++ch) v[ch] = v[ch] * scale[ch] + shift[ch];
  }
}

void relu_inplace(Tensor& x) {
  for (float& v : x.data) v = std::max(v, 0.0f);
}

void relu6_inplace(Tensor& x) {
  for (float& v : x.data) v = std::clamp(v, 0.0f, 6.0f);
}

void add_inplace(Tensor& x, const Tensor& other) {
  require(x.same_shape(other), ErrorCode::kInput, "add: shape mismatch");
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += other.data[i];
}

Tensor zero_pad(const Tensor& x, int top, int bottom, int left, int right) {
  Tensor out(x.height + top + bottom, x.width + left + right, x.channels);
  for (int y = 0; y < x.height; ++y) {
    const float* src = x.data.data() + static_cast<std::size_t>(y) * x.width * x.channels;
    float* dst = out.data.data() +
                 ((static_cast<std::size_t>(y + top) * out.width) + left) * x.channels;
    std::copy(src, src + static_cast<std::size_t>(x.width) * x.channels, dst);
  }
  return out;
}

Tensor max_pool(const Tensor& x, int window, int stride) {
  const int out_h = (x.height - window) / stride + 1;
  const int out_w = (x.width - window) / stride + 1;
  Tensor out(out_h, out_w, x.channels, -std::numeric_limits<float>::infinity());
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox)
      for (int ky = 0; ky < window; ++ky)
        for (int kx = 0; kx < window; ++kx)
          for (int c = 0; c < x.channels; ++c)
            out.at(oy, ox, c) = std::max(out.at(oy, ox, c), x.at(oy * stride + ky, ox * stride + kx, c));
  return out;
}

Tensor average_pool(const Tensor& x, int window, int stride) {
  const int out_h = (x.height - window) / stride + 1;
  const int out_w = (x.width - window) / stride + 1;
  Tensor out(out_h, out_w, x.channels);
  const float norm = 1.0f / static_cast<float>(window * window);
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox) {
      for (int ky = 0; ky < window; ++ky)
        for (int kx = 0; kx < window; ++kx)
          for (int c = 0; c < x.channels; ++c)
            out.at(oy, ox, c) += x.at(oy * stride + ky, ox * stride + kx, c);
      for (int c = 0; c < x.channels; ++c) out.at(oy, ox, c) *= norm;
    }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.height == b.height && a.width == b.width, ErrorCode::kInput,
          "concat: spatial shape mismatch");
  Tensor out(a.height, a.width, a.channels + b.channels);
  const std::size_t pixels = a.pixels();
  for (std::size_t p = 0; p < pixels; ++p) {
    float* dst = out.data.data() + p * out.channels;
    std::copy_n(a.data.data() + p * a.channels, a.channels, dst);
    std::copy_n(b.data.data() + p * b.channels, b.channels, dst + a.channels);
  }
  return out;
}

std::vector<float> global_average_pool(const Tensor& x) {
  std::vector<double> sums(x.channels, 0.0);
  const std::size_t pixels = x.pixels();
  for (std::size_t p = 0; p < pixels; ++p) {
    const float* v = x.data.data() + p * x.channels;
    for (int c = 0; c < x.channels; ++c) sums[c] += v[c];
  }
  std::vector<float> out(x.channels);
  for (int c = 0; c < x.channels; ++c) out[c] = static_cast<float>(sums[c] / static_cast<double>(pixels));
  return out;
}

}  // namespace hybridct::cnn
