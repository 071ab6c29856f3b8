#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hybridct/backbone.hpp"

namespace hybridct {

// Classification head appended to a pooled backbone:
// global average pooling -> dropout -> batch norm -> dense + ReLU -> dense + sigmoid.
struct HeadConfig {
  int dense_width = 128;
  double dropout_rate = 0.5;

  void validate() const;
  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

inline constexpr double kHeadBatchNormEpsilon = 1e-3;
inline constexpr double kHeadBatchNormMomentum = 0.99;

// Numerically stable logistic function 1 / (1 + e^-x).
double sigmoid(double x);

// Mean binary cross-entropy evaluated from logits, stable for large |logit|.
double binary_cross_entropy_from_logit(double logit, int label);

// Double-precision working copy of the head parameters. Kernels are stored
// (in, out) row-major as in Keras.
struct HeadState {
  int input_width = 0;
  int dense_width = 0;
  std::vector<double> bn_gamma, bn_beta, bn_moving_mean, bn_moving_variance;
  std::vector<double> dense_kernel, dense_bias;
  std::vector<double> output_kernel, output_bias;

  static HeadState initialize(int input_width, const HeadConfig& config, std::uint64_t seed);
  // Parameter tensors named head_bn/..., head_dense/..., head_output/...
  void export_to(ParamStore& store) const;
  static HeadState import_from(const ParamStore& store);
  static void declare(ParamStore& store, int input_width, int dense_width);

  std::size_t trainable_count() const;
  std::size_t statistic_count() const;
};

struct HeadOutput {
  std::vector<float> features;  // dense + ReLU activations
  double logit = 0.0;
  double probability = 0.5;
};

// Inference mode: dropout off, batch norm with moving statistics.
HeadOutput head_forward(const HeadState& head, std::span<const float> pooled);

struct HeadGradients {
  std::vector<double> bn_gamma, bn_beta, dense_kernel, dense_bias, output_kernel, output_bias;
};

struct HeadStepResult {
  double loss = 0.0;  // mean BCE over the batch
  std::size_t correct = 0;
  HeadGradients gradients;
  std::vector<double> batch_mean;      // for the moving-statistics update
  std::vector<double> batch_variance;  // biased, as Keras uses
};

// Training-mode forward and backward pass over one batch. `pooled` is
// batch x input_width row-major; `dropout_scale` holds per-element
// multipliers (0 or 1/(1-rate)), empty for no dropout.
HeadStepResult head_train_step(const HeadState& head, std::span<const float> pooled,
                               std::span<const int> labels, std::span<const double> dropout_scale);

void update_moving_statistics(HeadState& head, const HeadStepResult& step);

// Adam with Keras defaults (beta1 0.9, beta2 0.999, epsilon 1e-7).
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const HeadState& shape_like);
  void apply(HeadState& head, const HeadGradients& grads, double learning_rate);
  std::int64_t iterations() const { return step_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  void update(std::vector<double>& param, const std::vector<double>& grad, Slot& slot, double alpha);

  std::vector<Slot> slots_;
  std::int64_t step_ = 0;
};

}  // namespace hybridct
