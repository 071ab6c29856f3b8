#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hybridct/callbacks.hpp"
#include "oracles.hpp"

namespace hybridct {
namespace {

void expect_same(const CallbackTrace& a, const CallbackTrace& b) {
  EXPECT_EQ(a.epochs_run, b.epochs_run);
  EXPECT_EQ(a.early_stopped, b.early_stopped);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_EQ(a.learning_rates, b.learning_rates);
}

TEST(Callbacks, StopsAfterPatienceAndRestoresBest) {
  const std::vector<double> losses{0.50, 0.40, 0.41, 0.42, 0.43, 0.44, 0.45};
  const CallbackTrace t = replay_callbacks(losses, CallbackSchedule{});
  EXPECT_EQ(t.epochs_run, 7);
  EXPECT_TRUE(t.early_stopped);
  EXPECT_EQ(t.best_epoch, 2);
  // Plateau patience 3 halves the rate once, after epoch 5.
  EXPECT_EQ(t.learning_rates, (std::vector<double>{1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 5e-5, 5e-5}));
  expect_same(t, oracle::callback_oracle(losses, CallbackSchedule{}));
}

TEST(Callbacks, RunsToEpochLimitWhenImproving) {
  std::vector<double> losses;
  for (int i = 0; i < 25; ++i) losses.push_back(1.0 - 0.01 * i);
  const CallbackTrace t = replay_callbacks(losses, CallbackSchedule{});
  EXPECT_EQ(t.epochs_run, 20);
  EXPECT_FALSE(t.early_stopped);
  EXPECT_EQ(t.best_epoch, 20);
}

TEST(Callbacks, ImprovementSmallerThanDeltaDoesNotCount) {
  const std::vector<double> losses{0.5, 0.49995, 0.49992, 0.49991, 0.49994, 0.49999};
  const CallbackTrace t = replay_callbacks(losses, CallbackSchedule{});
  EXPECT_TRUE(t.early_stopped);
  EXPECT_EQ(t.epochs_run, 6);
  EXPECT_EQ(t.best_epoch, 1);
  expect_same(t, oracle::callback_oracle(losses, CallbackSchedule{}));
}

TEST(Callbacks, LearningRateHalvesDownToFloor) {
  CallbackSchedule s;
  s.max_epochs = 40;
  s.early_stop_patience = 1000;
  const std::vector<double> flat(40, 0.7);
  const CallbackTrace t = replay_callbacks(flat, s);
  std::vector<double> distinct;
  for (double lr : t.learning_rates)
    if (distinct.empty() || distinct.back() != lr) distinct.push_back(lr);
  const std::vector<double> expected{1e-4, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6, 3.125e-6, 1.5625e-6, 1e-6};
  ASSERT_EQ(distinct.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(distinct[i], expected[i], 1e-20);
  EXPECT_EQ(t.learning_rates.back(), 1e-6);
  // First epoch is an improvement over +inf; reductions follow every third epoch.
  EXPECT_EQ(t.learning_rates[3], 1e-4);
  EXPECT_EQ(t.learning_rates[4], 5e-5);
  expect_same(t, oracle::callback_oracle(flat, s));
}

TEST(Callbacks, RandomTracesMatchOracle) {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> step(-0.05, 0.06);
  for (int trial = 0; trial < 500; ++trial) {
    CallbackSchedule s;
    s.max_epochs = std::uniform_int_distribution<int>(1, 40)(gen);
    s.early_stop_patience = std::uniform_int_distribution<int>(1, 8)(gen);
    s.lr_patience = std::uniform_int_distribution<int>(1, 5)(gen);
    std::vector<double> losses;
    double loss = 1.0;
    for (int i = 0; i < 40; ++i) {
      // Occasional exact repeats exercise the non-strict comparison.
      if (gen() % 5 != 0) loss += step(gen);
      losses.push_back(loss);
    }
    const CallbackTrace t = replay_callbacks(losses, s);
    const CallbackTrace o = oracle::callback_oracle(losses, s);
    SCOPED_TRACE(trial);
    expect_same(t, o);
  }
}

TEST(Callbacks, PatienceOneNeverStopsOnFirstEpoch) {
  CallbackSchedule s;
  s.early_stop_patience = 1;
  const std::vector<double> losses{NAN, 0.5, 0.6};
  const CallbackTrace t = replay_callbacks(losses, s);
  EXPECT_EQ(t.epochs_run, 3);
  EXPECT_EQ(t.best_epoch, 2);
}

}  // namespace
}  // namespace hybridct
