#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. None of them call into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "hybridct/callbacks.hpp"

namespace hybridct::oracle {

// P(score+ > score-) + P(tie) / 2 over every positive/negative pair.
inline double pairwise_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Cyclic Jacobi rotations on a symmetric matrix; eigenpairs sorted by
// descending eigenvalue.
struct Eigenpairs {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

inline Eigenpairs jacobi_oracle(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        norm += a[i][j] * a[i][j];
        if (i != j) off += a[i][j] * a[i][j];
      }
    if (off <= 1e-30 * norm) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  Eigenpairs out;
  for (std::size_t i : order) {
    out.values.push_back(a[i][i]);
    std::vector<double> col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v[k][i];
    out.vectors.push_back(col);
  }
  return out;
}

// Sample covariance built with plain loops from the float data.
inline std::vector<std::vector<double>> covariance_oracle(const Eigen::MatrixXf& data) {
  const auto n = static_cast<std::size_t>(data.rows()), d = static_cast<std::size_t>(data.cols());
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        cov[j][k] += (data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - mean[j]) *
                     (data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - mean[k]);
  for (auto& row : cov)
    for (double& c : row) c /= static_cast<double>(n - 1);
  return cov;
}

// Written straight from the rules: an epoch improves when its loss beats the
// best so far by more than min_delta. Training stops once `patience`
// consecutive epochs fail to improve (never on the first epoch). The LR is
// multiplied by the factor after `lr_patience` non-improving epochs since the
// last improvement or reduction, clamped at the floor; at the floor the
// counter keeps running but nothing happens.
inline CallbackTrace callback_oracle(const std::vector<double>& losses, const CallbackSchedule& s) {
  CallbackTrace t;
  double best = INFINITY;
  int since_best = 0, since_change = 0;
  double lr = s.learning_rate;
  for (int e = 1; e <= s.max_epochs && e <= static_cast<int>(losses.size()); ++e) {
    t.learning_rates.push_back(lr);
    t.epochs_run = e;
    const double loss = losses[static_cast<std::size_t>(e - 1)];
    if (loss < best - s.min_delta) {
      best = loss;
      t.best_epoch = e;
      since_best = 0;
      since_change = 0;
    } else {
      ++since_best;
      ++since_change;
      if (since_change >= s.lr_patience && lr > s.lr_min) {
        lr = std::max(lr * s.lr_factor, s.lr_min);
        since_change = 0;
      }
      if (since_best >= s.early_stop_patience && e > 1) {
        t.early_stopped = true;
        break;
      }
    }
  }
  return t;
}

// Parameter totals summed layer by layer from the published architectures.
// Batch norm contributes gamma, beta (trainable) and two moving statistics.
struct LayerTotals {
  std::size_t weights = 0;
  std::size_t statistics = 0;
  void conv(std::size_t k, std::size_t in, std::size_t out, bool bias) {
    weights += k * k * in * out + (bias ? out : 0);
  }
  void depthwise(std::size_t k, std::size_t channels) { weights += k * k * channels; }
  void bn(std::size_t channels) {
    weights += 2 * channels;
    statistics += 2 * channels;
  }
};

inline LayerTotals vgg16_oracle() {
  LayerTotals t;
  const std::size_t channels[] = {3, 64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
  for (int i = 0; i + 1 < 14; ++i) t.conv(3, channels[i], channels[i + 1], true);
  return t;
}

inline LayerTotals densenet121_oracle() {
  LayerTotals t;
  t.conv(7, 3, 64, false);
  t.bn(64);
  std::size_t c = 64;
  const int blocks[] = {6, 12, 24, 16};
  for (int b = 0; b < 4; ++b) {
    for (int l = 0; l < blocks[b]; ++l) {
      t.bn(c);
      t.conv(1, c, 128, false);
      t.bn(128);
      t.conv(3, 128, 32, false);
      c += 32;
    }
    if (b < 3) {
      t.bn(c);
      t.conv(1, c, c / 2, false);
      c /= 2;
    }
  }
  t.bn(c);
  return t;
}

inline LayerTotals mobilenetv2_oracle() {
  LayerTotals t;
  t.conv(3, 3, 32, false);
  t.bn(32);
  t.depthwise(3, 32);
  t.bn(32);
  t.conv(1, 32, 16, false);
  t.bn(16);
  std::size_t in = 16;
  const std::size_t outs[] = {24, 32, 64, 96, 160, 320};
  const int repeats[] = {2, 3, 4, 3, 3, 1};
  for (int s = 0; s < 6; ++s) {
    for (int r = 0; r < repeats[s]; ++r) {
      const std::size_t expanded = in * 6;
      t.conv(1, in, expanded, false);
      t.bn(expanded);
      t.depthwise(3, expanded);
      t.bn(expanded);
      t.conv(1, expanded, outs[s], false);
      t.bn(outs[s]);
      in = outs[s];
    }
  }
  t.conv(1, 320, 1280, false);
  t.bn(1280);
  return t;
}

}  // namespace hybridct::oracle
