#include "hybridct/head.hpp"

#include <cmath>

#include "hybridct/error.hpp"
#include "hybridct/rng.hpp"

namespace hybridct {

void HeadConfig::validate() const {
  require(dense_width >= 1, ErrorCode::kConfig, "dense_width must be at least 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCode::kConfig,
          "dropout_rate must lie in [0, 1)");
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double binary_cross_entropy_from_logit(double logit, int label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

namespace {

std::vector<double> glorot_uniform(Rng& rng, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
  for (double& v : w) v = static_cast<double>(static_cast<float>(rng.uniform(-limit, limit)));
  return w;
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }
std::vector<float> to_float(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

HeadState HeadState::initialize(int input_width, const HeadConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  HeadState h;
  h.input_width = input_width;
  h.dense_width = config.dense_width;
  h.bn_gamma.assign(input_width, 1.0);
  h.bn_beta.assign(input_width, 0.0);
  h.bn_moving_mean.assign(input_width, 0.0);
  h.bn_moving_variance.assign(input_width, 1.0);
  h.dense_kernel = glorot_uniform(rng, input_width, config.dense_width);
  h.dense_bias.assign(config.dense_width, 0.0);
  h.output_kernel = glorot_uniform(rng, config.dense_width, 1);
  h.output_bias.assign(1, 0.0);
  return h;
}

void HeadState::declare(ParamStore& store, int input_width, int dense_width) {
  store.add("head_bn/gamma", {input_width}, ParamKind::kWeight);
  store.add("head_bn/beta", {input_width}, ParamKind::kWeight);
  store.add("head_bn/moving_mean", {input_width}, ParamKind::kMovingStatistic);
  store.add("head_bn/moving_variance", {input_width}, ParamKind::kMovingStatistic);
  store.add("head_dense/kernel", {input_width, dense_width}, ParamKind::kWeight);
  store.add("head_dense/bias", {dense_width}, ParamKind::kWeight);
  store.add("head_output/kernel", {dense_width, 1}, ParamKind::kWeight);
  store.add("head_output/bias", {1}, ParamKind::kWeight);
}

void HeadState::export_to(ParamStore& store) const {
  if (!store.contains("head_bn/gamma")) declare(store, input_width, dense_width);
  store.get("head_bn/gamma").values = to_float(bn_gamma);
  store.get("head_bn/beta").values = to_float(bn_beta);
  store.get("head_bn/moving_mean").values = to_float(bn_moving_mean);
  store.get("head_bn/moving_variance").values = to_float(bn_moving_variance);
  store.get("head_dense/kernel").values = to_float(dense_kernel);
  store.get("head_dense/bias").values = to_float(dense_bias);
  store.get("head_output/kernel").values = to_float(output_kernel);
  store.get("head_output/bias").values = to_float(output_bias);
}

HeadState HeadState::import_from(const ParamStore& store) {
  HeadState h;
  const auto& kernel = store.get("head_dense/kernel");
  require(kernel.shape.size() == 2, ErrorCode::kIntegrity, "head_dense/kernel must be rank 2");
  h.input_width = kernel.shape[0];
  h.dense_width = kernel.shape[1];
  h.bn_gamma = to_double(store.get("head_bn/gamma").values);
  h.bn_beta = to_double(store.get("head_bn/beta").values);
  h.bn_moving_mean = to_double(store.get("head_bn/moving_mean").values);
  h.bn_moving_variance = to_double(store.get("head_bn/moving_variance").values);
  h.dense_kernel = to_double(kernel.values);
  h.dense_bias = to_double(store.get("head_dense/bias").values);
  h.output_kernel = to_double(store.get("head_output/kernel").values);
  h.output_bias = to_double(store.get("head_output/bias").values);
  require(h.dense_kernel.size() == static_cast<std::size_t>(h.input_width) * h.dense_width &&
              h.bn_gamma.size() == static_cast<std::size_t>(h.input_width) &&
              h.output_kernel.size() == static_cast<std::size_t>(h.dense_width) &&
              h.output_bias.size() == 1,
          ErrorCode::kIntegrity, "head parameter shapes are inconsistent");
  return h;
}

std::size_t HeadState::trainable_count() const {
  return bn_gamma.size() + bn_beta.size() + dense_kernel.size() + dense_bias.size() +
         output_kernel.size() + output_bias.size();
}

std::size_t HeadState::statistic_count() const {
  return bn_moving_mean.size() + bn_moving_variance.size();
}

HeadOutput head_forward(const HeadState& head, std::span<const float> pooled) {
  require(pooled.size() == static_cast<std::size_t>(head.input_width), ErrorCode::kInput,
          "head input width " + std::to_string(pooled.size()) + " does not match " +
              std::to_string(head.input_width));
  const int c = head.input_width, d = head.dense_width;
  std::vector<double> normalized(c);
  for (int j = 0; j < c; ++j) {
    const double inv = 1.0 / std::sqrt(head.bn_moving_variance[j] + kHeadBatchNormEpsilon);
    normalized[j] = head.bn_gamma[j] * (pooled[j] - head.bn_moving_mean[j]) * inv + head.bn_beta[j];
  }
  HeadOutput out;
  out.features.resize(d);
  double logit = head.output_bias[0];
  for (int k = 0; k < d; ++k) {
    double a = head.dense_bias[k];
    for (int j = 0; j < c; ++j) a += normalized[j] * head.dense_kernel[static_cast<std::size_t>(j) * d + k];
    const double h = std::max(a, 0.0);
    out.features[k] = static_cast<float>(h);
    logit += h * head.output_kernel[k];
  }
  out.logit = logit;
  out.probability = sigmoid(logit);
  return out;
}

HeadStepResult head_train_step(const HeadState& head, std::span<const float> pooled,
                               std::span<const int> labels, std::span<const double> dropout_scale) {
  const int c = head.input_width, d = head.dense_width;
  const auto batch = static_cast<int>(labels.size());
  require(batch > 0 && pooled.size() == static_cast<std::size_t>(batch) * c, ErrorCode::kInput,
          "head_train_step: batch shape mismatch");
  require(dropout_scale.empty() || dropout_scale.size() == pooled.size(), ErrorCode::kInput,
          "head_train_step: dropout mask shape mismatch");

  // Forward.
  std::vector<double> x(pooled.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = pooled[i] * (dropout_scale.empty() ? 1.0 : dropout_scale[i]);

  HeadStepResult result;
  result.batch_mean.assign(c, 0.0);
  result.batch_variance.assign(c, 0.0);
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < c; ++j) result.batch_mean[j] += x[static_cast<std::size_t>(b) * c + j];
  for (double& m : result.batch_mean) m /= batch;
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < c; ++j) {
      const double delta = x[static_cast<std::size_t>(b) * c + j] - result.batch_mean[j];
      result.batch_variance[j] += delta * delta;
    }
  for (double& v : result.batch_variance) v /= batch;

  std::vector<double> inv_std(c), xhat(x.size()), y(x.size());
  for (int j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(result.batch_variance[j] + kHeadBatchNormEpsilon);
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < c; ++j) {
      const std::size_t i = static_cast<std::size_t>(b) * c + j;
      xhat[i] = (x[i] - result.batch_mean[j]) * inv_std[j];
      y[i] = head.bn_gamma[j] * xhat[i] + head.bn_beta[j];
    }

  std::vector<double> pre(static_cast<std::size_t>(batch) * d), hidden(pre.size()), dz(batch);
  for (int b = 0; b < batch; ++b) {
    double logit = head.output_bias[0];
    for (int k = 0; k < d; ++k) {
      double a = head.dense_bias[k];
      for (int j = 0; j < c; ++j)
        a += y[static_cast<std::size_t>(b) * c + j] * head.dense_kernel[static_cast<std::size_t>(j) * d + k];
      pre[static_cast<std::size_t>(b) * d + k] = a;
      const double h = std::max(a, 0.0);
      hidden[static_cast<std::size_t>(b) * d + k] = h;
      logit += h * head.output_kernel[k];
    }
    const int label = labels[b];
    result.loss += binary_cross_entropy_from_logit(logit, label);
    const double p = sigmoid(logit);
    if ((p > 0.5 ? 1 : 0) == label) ++result.correct;
    dz[b] = (p - label) / batch;
  }
  result.loss /= batch;

  // Backward.
  HeadGradients& g = result.gradients;
  g.output_kernel.assign(d, 0.0);
  g.output_bias.assign(1, 0.0);
  g.dense_kernel.assign(static_cast<std::size_t>(c) * d, 0.0);
  g.dense_bias.assign(d, 0.0);
  g.bn_gamma.assign(c, 0.0);
  g.bn_beta.assign(c, 0.0);

  std::vector<double> d_pre(pre.size());
  for (int b = 0; b < batch; ++b) {
    g.output_bias[0] += dz[b];
    for (int k = 0; k < d; ++k) {
      const std::size_t i = static_cast<std::size_t>(b) * d + k;
      g.output_kernel[k] += hidden[i] * dz[b];
      d_pre[i] = pre[i] > 0.0 ? dz[b] * head.output_kernel[k] : 0.0;
      g.dense_bias[k] += d_pre[i];
    }
  }
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < c; ++j) {
      const double yv = y[static_cast<std::size_t>(b) * c + j];
      double dy = 0.0;
      for (int k = 0; k < d; ++k) {
        const double dp = d_pre[static_cast<std::size_t>(b) * d + k];
        g.dense_kernel[static_cast<std::size_t>(j) * d + k] += yv * dp;
        dy += dp * head.dense_kernel[static_cast<std::size_t>(j) * d + k];
      }
      g.bn_gamma[j] += dy * xhat[static_cast<std::size_t>(b) * c + j];
      g.bn_beta[j] += dy;
    }
  return result;
}

void update_moving_statistics(HeadState& head, const HeadStepResult& step) {
  for (int j = 0; j < head.input_width; ++j) {
    head.bn_moving_mean[j] =
        head.bn_moving_mean[j] * kHeadBatchNormMomentum + step.batch_mean[j] * (1.0 - kHeadBatchNormMomentum);
    head.bn_moving_variance[j] = head.bn_moving_variance[j] * kHeadBatchNormMomentum +
                                 step.batch_variance[j] * (1.0 - kHeadBatchNormMomentum);
  }
}

AdamOptimizer::AdamOptimizer(const HeadState& shape_like) {
  for (std::size_t size : {shape_like.bn_gamma.size(), shape_like.bn_beta.size(),
                           shape_like.dense_kernel.size(), shape_like.dense_bias.size(),
                           shape_like.output_kernel.size(), shape_like.output_bias.size()}) {
    slots_.push_back({std::vector<double>(size, 0.0), std::vector<double>(size, 0.0)});
  }
}

void AdamOptimizer::update(std::vector<double>& param, const std::vector<double>& grad, Slot& slot,
                           double alpha) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEpsilon = 1e-7;
  for (std::size_t i = 0; i < param.size(); ++i) {
    slot.m[i] += (grad[i] - slot.m[i]) * (1.0 - kBeta1);
    slot.v[i] += (grad[i] * grad[i] - slot.v[i]) * (1.0 - kBeta2);
    param[i] -= alpha * slot.m[i] / (std::sqrt(slot.v[i]) + kEpsilon);
  }
}

void AdamOptimizer::apply(HeadState& head, const HeadGradients& grads, double learning_rate) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double alpha = learning_rate * std::sqrt(1.0 - std::pow(0.999, t)) / (1.0 - std::pow(0.9, t));
  update(head.bn_gamma, grads.bn_gamma, slots_[0], alpha);
  update(head.bn_beta, grads.bn_beta, slots_[1], alpha);
  update(head.dense_kernel, grads.dense_kernel, slots_[2], alpha);
  update(head.dense_bias, grads.dense_bias, slots_[3], alpha);
  update(head.output_kernel, grads.output_kernel, slots_[4], alpha);
  update(head.output_bias, grads.output_bias, slots_[5], alpha);
}

}  // namespace hybridct
