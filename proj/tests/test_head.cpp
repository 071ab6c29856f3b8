#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hybridct/error.hpp"
#include "hybridct/head.hpp"

namespace hybridct {
namespace {

// Loss as a plain function of the parameters, with a fixed dropout mask.
double batch_loss(const HeadState& h, const std::vector<float>& x, const std::vector<int>& y,
                  const std::vector<double>& mask) {
  return head_train_step(h, x, y, mask).loss;
}

struct Problem {
  HeadState head;
  std::vector<float> x;
  std::vector<int> y;
  std::vector<double> mask;
};

Problem make_problem(std::uint64_t seed) {
  constexpr int kBatch = 6, kWidth = 5;
  Problem p;
  HeadConfig config;
  config.dense_width = 4;
  p.head = HeadState::initialize(kWidth, config, seed);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  // Non-default gamma/beta so every gradient path is exercised.
  for (double& g : p.head.bn_gamma) g = 1.0 + 0.3 * z(gen);
  for (double& b : p.head.bn_beta) b = 0.2 * z(gen);
  for (double& b : p.head.dense_bias) b = 0.5 + 0.1 * z(gen);
  for (int i = 0; i < kBatch * kWidth; ++i) p.x.push_back(static_cast<float>(2.0 + z(gen)));
  for (int i = 0; i < kBatch; ++i) p.y.push_back(i % 2);
  for (int i = 0; i < kBatch * kWidth; ++i) p.mask.push_back(i % 7 == 3 ? 0.0 : 2.0);
  return p;
}

void check_gradient(Problem& p, std::vector<double>& param, const std::vector<double>& analytic,
                    const char* name) {
  ASSERT_EQ(param.size(), analytic.size()) << name;
  constexpr double kStep = 1e-6;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + kStep;
    const double up = batch_loss(p.head, p.x, p.y, p.mask);
    param[i] = saved - kStep;
    const double down = batch_loss(p.head, p.x, p.y, p.mask);
    param[i] = saved;
    const double numeric = (up - down) / (2 * kStep);
    EXPECT_NEAR(analytic[i], numeric, 1e-6 + 1e-5 * std::abs(numeric)) << name << "[" << i << "]";
  }
}

TEST(Head, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Problem p = make_problem(seed);
    const HeadGradients g = head_train_step(p.head, p.x, p.y, p.mask).gradients;
    check_gradient(p, p.head.bn_gamma, g.bn_gamma, "bn_gamma");
    check_gradient(p, p.head.bn_beta, g.bn_beta, "bn_beta");
    check_gradient(p, p.head.dense_kernel, g.dense_kernel, "dense_kernel");
    check_gradient(p, p.head.dense_bias, g.dense_bias, "dense_bias");
    check_gradient(p, p.head.output_kernel, g.output_kernel, "output_kernel");
    check_gradient(p, p.head.output_bias, g.output_bias, "output_bias");
  }
}

TEST(Head, SigmoidAndCrossEntropyAreStable) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(-700.0), 0.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  for (double x : {0.3, 5.0, 30.0}) EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-12);
  EXPECT_NEAR(binary_cross_entropy_from_logit(0.0, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(binary_cross_entropy_from_logit(0.0, 0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(binary_cross_entropy_from_logit(1000.0, 0), 1000.0);
  EXPECT_DOUBLE_EQ(binary_cross_entropy_from_logit(-1000.0, 1), 1000.0);
  EXPECT_NEAR(binary_cross_entropy_from_logit(3.0, 1), -std::log(sigmoid(3.0)), 1e-14);
  EXPECT_NEAR(binary_cross_entropy_from_logit(3.0, 0), -std::log(1.0 - sigmoid(3.0)), 1e-13);
}

TEST(Head, InferenceUsesMovingStatistics) {
  Problem p = make_problem(4);
  std::vector<float> sample(p.x.begin(), p.x.begin() + 5);
  const HeadOutput a = head_forward(p.head, sample);
  EXPECT_NEAR(a.probability, sigmoid(a.logit), 1e-15);
  for (float f : a.features) EXPECT_GE(f, 0.0f);
  p.head.bn_moving_mean[0] += 1.0;
  EXPECT_NE(head_forward(p.head, sample).logit, a.logit);
  EXPECT_THROW(head_forward(p.head, std::vector<float>(4, 0.0f)), Error);
}

TEST(Head, UnitDropoutMaskMatchesNoDropout) {
  const Problem p = make_problem(7);
  const std::vector<double> ones(p.x.size(), 1.0);
  const HeadStepResult a = head_train_step(p.head, p.x, p.y, ones);
  const HeadStepResult b = head_train_step(p.head, p.x, p.y, {});
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.gradients.dense_kernel, b.gradients.dense_kernel);
}

TEST(Head, AdamFirstStepMatchesClosedForm) {
  Problem p = make_problem(5);
  const HeadState before = p.head;
  const HeadGradients g = head_train_step(p.head, p.x, p.y, {}).gradients;
  AdamOptimizer adam(p.head);
  constexpr double kLr = 1e-3;
  adam.apply(p.head, g, kLr);
  EXPECT_EQ(adam.iterations(), 1);
  // After one step m = 0.1 g and v = 0.001 g^2, bias-corrected.
  for (std::size_t i = 0; i < g.dense_kernel.size(); ++i) {
    const double gi = g.dense_kernel[i];
    const double expected = kLr * gi * std::sqrt(1e-3) / (std::sqrt(1e-3) * std::abs(gi) + 1e-7);
    EXPECT_NEAR(before.dense_kernel[i] - p.head.dense_kernel[i], expected, 1e-15);
  }
  // For gradients well above epsilon the step is lr * sign(g).
  for (std::size_t i = 0; i < g.output_kernel.size(); ++i)
    if (std::abs(g.output_kernel[i]) > 1e-2) {
      EXPECT_NEAR(before.output_kernel[i] - p.head.output_kernel[i], kLr * (g.output_kernel[i] > 0 ? 1 : -1), 1e-3 * kLr);
    }
}

TEST(Head, MovingStatisticsUseMomentumAndBiasedVariance) {
  HeadConfig config;
  config.dense_width = 2;
  HeadState h = HeadState::initialize(2, config, 1);
  const std::vector<float> x{1, 10, 3, 10};
  const std::vector<int> y{0, 1};
  const HeadStepResult step = head_train_step(h, x, y, {});
  EXPECT_DOUBLE_EQ(step.batch_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(step.batch_variance[0], 1.0);
  EXPECT_DOUBLE_EQ(step.batch_variance[1], 0.0);
  update_moving_statistics(h, step);
  EXPECT_NEAR(h.bn_moving_mean[0], 0.02, 1e-15);
  EXPECT_NEAR(h.bn_moving_mean[1], 0.1, 1e-15);
  EXPECT_NEAR(h.bn_moving_variance[0], 1.0, 1e-15);
  EXPECT_NEAR(h.bn_moving_variance[1], 0.99, 1e-15);
}

TEST(Head, ParameterCountFollowsLayerShapes) {
  for (int width : {512, 1024, 1280}) {
    const HeadState h = HeadState::initialize(width, HeadConfig{}, 3);
    // batch norm gamma+beta, dense kernel+bias, output kernel+bias
    const std::size_t expected = 2u * width + static_cast<std::size_t>(width) * 128 + 128 + 128 + 1;
    EXPECT_EQ(h.trainable_count(), expected);
    EXPECT_EQ(h.statistic_count(), 2u * width);
  }
}

TEST(Head, ParamStoreRoundTrip) {
  const Problem p = make_problem(6);
  ParamStore store;
  p.head.export_to(store);
  const HeadState back = HeadState::import_from(store);
  EXPECT_EQ(back.input_width, p.head.input_width);
  for (std::size_t i = 0; i < back.dense_kernel.size(); ++i)
    EXPECT_EQ(back.dense_kernel[i], static_cast<double>(static_cast<float>(p.head.dense_kernel[i])));
}

TEST(Head, ConfigValidation) {
  HeadConfig c;
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = HeadConfig{};
  c.dense_width = 0;
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace hybridct
