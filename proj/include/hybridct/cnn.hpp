#pragma once

#include <span>
#include <vector>

#include "hybridct/tensor.hpp"

// Inference-only convolution primitives used by the frozen backbones. Kernel
// layouts follow Keras: conv kernels are (kh, kw, in, out), depthwise kernels
// are (kh, kw, channels, 1).
namespace hybridct::cnn {

enum class Padding { kValid, kSame };

struct Conv2dSpec {
  int kernel_h = 1;
  int kernel_w = 1;
  int out_channels = 1;
  int stride = 1;
  Padding padding = Padding::kValid;
};

Tensor conv2d(const Tensor& input, const Conv2dSpec& spec, std::span<const float> kernel,
              std::span<const float> bias = {});

Tensor depthwise_conv2d(const Tensor& input, int kernel_size, int stride, Padding padding,
                        std::span<const float> kernel);

struct BatchNormParams {
  std::span<const float> gamma;
  std::span<const float> beta;
  std::span<const float> moving_mean;
  std::span<const float> moving_variance;
  float epsilon = 1e-3f;
};

void batch_norm_inplace(Tensor& x, const BatchNormParams& bn);
void relu_inplace(Tensor& x);
void relu6_inplace(Tensor& x);
void add_inplace(Tensor& x, const Tensor& other);

Tensor zero_pad(const Tensor& x, int top, int bottom, int left, int right);
Tensor max_pool(const Tensor& x, int window, int stride);
Tensor average_pool(const Tensor& x, int window, int stride);
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::vector<float> global_average_pool(const Tensor& x);

// TF "SAME" padding split: the extra pixel goes after (bottom/right).
struct PadAmounts {
  int before = 0;
  int after = 0;
};
PadAmounts same_padding(int input, int kernel, int stride);

}  // namespace hybridct::cnn
