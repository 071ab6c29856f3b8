#include <gtest/gtest.h>

#include <Eigen/QR>

#include <cmath>
#include <filesystem>
#include <random>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/fusion.hpp"
#include "hybridct/json_io.hpp"
#include "oracles.hpp"

namespace hybridct {
namespace {

namespace fs = std::filesystem;

FeatureMatrix matrix(const Eigen::MatrixXd& m, BackboneId id = BackboneId::kVgg16, std::string prefix = "r") {
  FeatureMatrix f;
  f.data = m.cast<float>();
  f.provenance.backbones = {id};
  f.provenance.widths = {static_cast<int>(m.cols())};
  f.provenance.split = Split::kTrain;
  for (Eigen::Index i = 0; i < m.rows(); ++i) f.provenance.record_ids.push_back(prefix + std::to_string(i));
  return f;
}

// Random data with a well-separated spectrum: independent normals scaled by
// decaying factors, then rotated.
Eigen::MatrixXd random_data(std::mt19937_64& gen, int n, int d) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd raw(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) raw(i, j) = z(gen) * std::pow(0.7, j) * 3.0;
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = z(gen);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd rotation = qr.householderQ();
  return raw * rotation + Eigen::MatrixXd::Constant(n, d, 1.5);
}

TEST(Scaler, PopulationStandardDeviation) {
  Eigen::MatrixXd m(3, 2);
  m << 1, 5, 2, 5, 3, 5;
  const FeatureMatrix f = matrix(m);
  const ScalerParams p = fit_scaler(f);
  EXPECT_DOUBLE_EQ(p.mean[0], 2.0);
  EXPECT_NEAR(p.std[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_EQ(p.std[1], 0.0);
  const FeatureMatrix s = apply_scaler(f, p);
  EXPECT_EQ(s.stage, FeatureStage::kStandardized);
  EXPECT_NEAR(s.data(0, 0), -1.2247449, 1e-6);
  EXPECT_NEAR(s.data(1, 0), 0.0, 1e-7);
  EXPECT_NEAR(s.data(2, 0), 1.2247449, 1e-6);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(s.data(i, 1), 0.0f);
}

TEST(Scaler, StandardizesTrainingColumns) {
  std::mt19937_64 gen(2);
  const FeatureMatrix f = matrix(random_data(gen, 40, 6));
  const FeatureMatrix s = apply_scaler(f, fit_scaler(f));
  const Eigen::MatrixXd x = s.data.cast<double>();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    EXPECT_NEAR(mean, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt((x.col(j).array() - mean).square().mean()), 1.0, 1e-6);
  }
  EXPECT_THROW(fit_scaler(matrix(Eigen::MatrixXd(1, 3))), Error);
}

TEST(SelectK, CumulativeRule) {
  EXPECT_EQ(select_k(std::vector<double>{0.6, 0.3, 0.08, 0.02}, 0.95), 3);
  EXPECT_EQ(select_k(std::vector<double>{1.0}, 0.95), 1);
  EXPECT_EQ(select_k(std::vector<double>{0.5, 0.3}, 0.95), 2);
  EXPECT_THROW(select_k(std::vector<double>{}, 0.95), Error);
}

TEST(Pca, RankOneExample) {
  Eigen::MatrixXd m(3, 2);
  m << 1, 1, 2, 2, 3, 3;
  const FeatureMatrix f = matrix(m);
  const PcaParams p = fit_pca(f, 0.95);
  ASSERT_EQ(p.k(), 1);
  EXPECT_NEAR(p.components(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(p.components(0, 1), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(p.explained_variance_ratio[0], 1.0, 1e-12);
  const FeatureMatrix t = transform_pca(f, p);
  EXPECT_EQ(t.stage, FeatureStage::kReduced);
  EXPECT_NEAR(t.data(0, 0), -std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(t.data(1, 0), 0.0, 1e-6);
  EXPECT_NEAR(t.data(2, 0), std::sqrt(2.0), 1e-6);
  EXPECT_THROW(fit_pca(matrix(Eigen::MatrixXd::Ones(1, 2))), Error);
}

TEST(Pca, MatchesEigendecompositionOracle) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 120; ++trial) {
    const int d = std::uniform_int_distribution<int>(2, 16)(gen);
    const int n = std::uniform_int_distribution<int>(d + 2, 50)(gen);
    const FeatureMatrix f = matrix(random_data(gen, n, d));
    const PcaParams p = fit_pca(f, 0.95);
    const oracle::Eigenpairs reference = oracle::jacobi_oracle(oracle::covariance_oracle(f.data));

    double total = 0.0;
    for (double v : reference.values) total += std::max(v, 0.0);
    std::vector<double> ratios;
    for (double v : reference.values) ratios.push_back(std::max(v, 0.0) / total);
    double cumulative = 0.0;
    int k = 0;
    while (k < d && cumulative < 0.95) cumulative += ratios[static_cast<std::size_t>(k++)];
    ASSERT_EQ(p.k(), k) << "trial " << trial;

    const Eigen::MatrixXd gram = p.components * p.components.transpose();
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-6);
    for (int i = 0; i < k; ++i) {
      EXPECT_NEAR(p.explained_variance[i], reference.values[static_cast<std::size_t>(i)], 1e-8 * reference.values[0]);
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += p.components(i, j) * reference.vectors[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      EXPECT_GE(std::abs(dot), 1.0 - 1e-6) << "trial " << trial << " axis " << i;
      if (i + 1 < k) {
        EXPECT_GE(p.explained_variance_ratio[i], p.explained_variance_ratio[i + 1]);
      }
    }
    EXPECT_GE(p.explained_variance_ratio.sum(), 0.95 - 1e-12);
  }
}

TEST(Pca, SignConventionMakesLargestEntryPositive) {
  std::mt19937_64 gen(4);
  const PcaParams p = fit_pca(matrix(random_data(gen, 30, 5)), 1.0);
  for (Eigen::Index i = 0; i < p.k(); ++i) {
    Eigen::Index largest = 0;
    p.components.row(i).cwiseAbs().maxCoeff(&largest);
    EXPECT_GT(p.components(i, largest), 0.0);
  }
}

TEST(Pca, FullTargetKeepsEveryNonzeroAxis) {
  std::mt19937_64 gen(6);
  EXPECT_EQ(fit_pca(matrix(random_data(gen, 30, 5)), 1.0).k(), 5);
  EXPECT_EQ(fit_pca(matrix(random_data(gen, 4, 8)), 1.0).k(), 3);
}

TEST(Pca, TransformProperties) {
  std::mt19937_64 gen(9);
  const FeatureMatrix f = matrix(random_data(gen, 40, 7));
  const PcaParams p = fit_pca(f, 0.95);

  FeatureMatrix center = matrix(p.center.transpose());
  EXPECT_LT(transform_pca(center, p).data.cwiseAbs().maxCoeff(), 1e-6);

  const Eigen::MatrixXd t = transform_pca(f, p).data.cast<double>();
  const Eigen::MatrixXd c = t.rowwise() - t.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(t.rows() - 1);
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j)
      if (i != j) {
        EXPECT_NEAR(cov(i, j), 0.0, 1e-5 * cov(0, 0));
      }

  EXPECT_THROW(transform_pca(matrix(Eigen::MatrixXd::Ones(2, 3)), p), Error);
}

TEST(Pca, ReconstructionErrorShrinksWithK) {
  std::mt19937_64 gen(12);
  const FeatureMatrix f = matrix(random_data(gen, 35, 8));
  const PcaParams full = fit_pca(f, 1.0);
  double previous = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 1; k <= full.k(); ++k) {
    PcaParams p = full;
    p.components = full.components.topRows(k);
    p.explained_variance = full.explained_variance.head(k);
    p.explained_variance_ratio = full.explained_variance_ratio.head(k);
    const double err = (f.data.cast<double>() - reconstruct(transform_pca(f, p), p)).norm();
    EXPECT_LE(err, previous + 1e-9);
    previous = err;
  }
  EXPECT_LT(previous, 1e-4);
}

TEST(Stack, ConcatenatesInCanonicalOrder) {
  const FeatureMatrix a = matrix(Eigen::MatrixXd::Constant(4, 2, 1.0), BackboneId::kVgg16);
  const FeatureMatrix b = matrix(Eigen::MatrixXd::Constant(4, 3, 2.0), BackboneId::kDenseNet121);
  const std::vector<FeatureMatrix> parts{a, b};
  const FeatureMatrix s = stack_features(parts);
  EXPECT_EQ(s.stage, FeatureStage::kStacked);
  EXPECT_EQ(s.rows(), 4);
  EXPECT_EQ(s.cols(), 5);
  EXPECT_EQ(s.data(0, 1), 1.0f);
  EXPECT_EQ(s.data(0, 2), 2.0f);
  EXPECT_EQ(s.provenance.widths, (std::vector<int>{2, 3}));
  EXPECT_EQ(s.provenance.record_ids, a.provenance.record_ids);

  const std::vector<FeatureMatrix> three{
      matrix(Eigen::MatrixXd::Zero(3, 7), BackboneId::kVgg16),
      matrix(Eigen::MatrixXd::Zero(3, 5), BackboneId::kDenseNet121),
      matrix(Eigen::MatrixXd::Zero(3, 9), BackboneId::kMobileNetV2)};
  EXPECT_EQ(stack_features(three).cols(), 21);
}

TEST(Stack, DetectsMisalignment) {
  FeatureMatrix a = matrix(Eigen::MatrixXd::Zero(3, 2), BackboneId::kVgg16);
  FeatureMatrix b = matrix(Eigen::MatrixXd::Zero(3, 2), BackboneId::kDenseNet121);
  std::swap(b.provenance.record_ids[0], b.provenance.record_ids[2]);
  try {
    stack_features(std::vector<FeatureMatrix>{a, b});
    FAIL() << "expected an alignment error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlignment);
  }
  FeatureMatrix c = matrix(Eigen::MatrixXd::Zero(3, 2), BackboneId::kDenseNet121);
  EXPECT_THROW(stack_features(std::vector<FeatureMatrix>{c, a}), Error);
}

std::vector<FeatureMatrix> three_backbones(std::mt19937_64& gen, int n, Split split = Split::kTrain) {
  std::vector<FeatureMatrix> parts;
  for (BackboneId id : kCanonicalBackbones) {
    FeatureMatrix f = matrix(random_data(gen, n, 12), id);
    f.provenance.split = split;
    parts.push_back(f);
  }
  return parts;
}

TEST(Fusion, FitApplyAndRoundTrip) {
  std::mt19937_64 gen(21);
  const auto train = three_backbones(gen, 40);
  const auto test = three_backbones(gen, 40, Split::kTest);
  for (bool after : {false, true}) {
    FusionConfig config;
    config.pca_after_stack = after;
    const FusionArtifact fusion = fit_fusion(train, config);
    const FeatureMatrix stacked = apply_fusion(fusion, test);
    EXPECT_EQ(stacked.stage, FeatureStage::kStacked);
    EXPECT_EQ(stacked.cols(), fusion.stacked_width());
    EXPECT_EQ(stacked.provenance.backbones.size(), 3u);

    const fs::path path = fs::temp_directory_path() / "hybridct_fusion_test.json";
    save_fusion(fusion, path);
    const FeatureMatrix again = apply_fusion(load_fusion(path), test);
    EXPECT_TRUE(again.data == stacked.data);
    fs::remove(path);
  }
}

TEST(Fusion, LoadRejectsIncompleteOrForeignArtifacts) {
  std::mt19937_64 gen(22);
  const FusionArtifact fusion = fit_fusion(three_backbones(gen, 30), FusionConfig{});
  const fs::path path = fs::temp_directory_path() / "hybridct_fusion_bad.json";
  save_fusion(fusion, path);
  Json j = Json::parse(io::read_text_file(path));

  Json missing = j;
  missing["backbones"].erase("mobilenetv2");
  io::write_text_file(path, missing.dump());
  try {
    load_fusion(path);
    FAIL() << "expected an integrity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIntegrity);
  }

  Json future = j;
  future["format_version"] = 99;
  io::write_text_file(path, future.dump());
  try {
    load_fusion(path);
    FAIL() << "expected a version error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
  }
  fs::remove(path);
}

TEST(FeatureFile, RoundTripIsBitExact) {
  std::mt19937_64 gen(30);
  FeatureMatrix f = matrix(random_data(gen, 9, 5), BackboneId::kDenseNet121);
  f.stage = FeatureStage::kReduced;
  f.provenance.split = Split::kTest;
  const fs::path path = fs::temp_directory_path() / "hybridct_features.hctf";
  write_features(path, f, "cafe");
  std::string hash;
  const FeatureMatrix back = read_features(path, &hash);
  EXPECT_TRUE(back.data == f.data);
  EXPECT_EQ(back.stage, f.stage);
  EXPECT_EQ(back.provenance, f.provenance);
  EXPECT_EQ(hash, "cafe");

  auto bytes = io::read_file(path);
  bytes.pop_back();
  io::write_file(path, bytes);
  try {
    read_features(path);
    FAIL() << "expected an integrity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIntegrity);
  }
  fs::remove(path);
  fs::remove(fs::path(path.string() + ".meta"));
}

}  // namespace
}  // namespace hybridct
