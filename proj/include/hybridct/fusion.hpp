#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hybridct/backbone.hpp"
#include "hybridct/data_ingest.hpp"
#include "hybridct/transfer.hpp"

namespace hybridct {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FeatureStage { kRaw, kStandardized, kReduced, kStacked };

std::string_view to_string(FeatureStage stage);
FeatureStage parse_feature_stage(std::string_view text);

struct FeatureProvenance {
  std::vector<BackboneId> backbones;  // canonical order once stacked
  std::vector<int> widths;            // per-backbone column counts, same order
  Split split = Split::kUnassigned;
  std::vector<std::string> record_ids;  // one per row, in row order

  friend bool operator==(const FeatureProvenance&, const FeatureProvenance&) = default;
};

struct FeatureMatrix {
  FloatMatrix data;
  FeatureStage stage = FeatureStage::kRaw;
  FeatureProvenance provenance;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
};

// Penultimate (dense + ReLU) head activations in inference mode, one row per
// image. When `probabilities` is given it receives the sigmoid outputs from
// the same forward pass.
FeatureMatrix extract_features(const Model& model, const ImageSource& images, Split split,
                               std::vector<std::string> record_ids,
                               std::vector<double>* probabilities = nullptr);

struct ScalerParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population (1/n)
};

ScalerParams fit_scaler(const FeatureMatrix& train);
// Columns whose training std is zero map to zero.
FeatureMatrix apply_scaler(const FeatureMatrix& x, const ScalerParams& params);

struct PcaParams {
  Eigen::MatrixXd components;  // k x d, orthonormal rows
  Eigen::VectorXd center;
  Eigen::VectorXd explained_variance;  // sample covariance eigenvalues of kept axes
  Eigen::VectorXd explained_variance_ratio;
  double variance_target = 0.95;

  Eigen::Index k() const { return components.rows(); }
  Eigen::Index d() const { return components.cols(); }
};

// Smallest k whose cumulative ratio reaches `target`; all of them if it is
// never reached.
int select_k(std::span<const double> ratios, double target);

// Eigendecomposition of the sample covariance. Each axis is signed so that
// its largest-magnitude entry is positive.
PcaParams fit_pca(const FeatureMatrix& train, double variance_target = 0.95);
FeatureMatrix transform_pca(const FeatureMatrix& x, const PcaParams& params);
Eigen::MatrixXd reconstruct(const FeatureMatrix& reduced, const PcaParams& params);

// Horizontal concatenation; parts must cover the same records in the same
// order and come in canonical backbone order.
FeatureMatrix stack_features(std::span<const FeatureMatrix> parts);

struct FusionConfig {
  double variance_target = 0.95;
  // Reduce once on the stacked standardized features instead of per backbone.
  bool pca_after_stack = false;

  void validate() const;
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

struct BackboneFusion {
  BackboneId backbone = BackboneId::kVgg16;
  ScalerParams scaler;
  std::optional<PcaParams> pca;  // absent when reducing after stacking
};

struct FusionArtifact {
  FusionConfig config;
  std::vector<BackboneFusion> parts;  // canonical backbone order
  std::optional<PcaParams> stacked_pca;

  int stacked_width() const;
};

// `raw_train` holds the RAW TRAIN features of all three backbones in
// canonical order.
FusionArtifact fit_fusion(std::span<const FeatureMatrix> raw_train, const FusionConfig& config);
FeatureMatrix apply_fusion(const FusionArtifact& fusion, std::span<const FeatureMatrix> raw);

inline constexpr int kFusionFormatVersion = 1;
void save_fusion(const FusionArtifact& fusion, const std::filesystem::path& path);
FusionArtifact load_fusion(const std::filesystem::path& path);

// Feature files: "HCTF1", u32 rows, u32 cols, row-major float32 data, plus a
// JSON sidecar <path>.meta with stage, provenance and the producing config hash.
void write_features(const std::filesystem::path& path, const FeatureMatrix& features,
                    const std::string& config_hash);
FeatureMatrix read_features(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace hybridct
