#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hybridct/fusion.hpp"

namespace hybridct {

enum class KernelType { kRbf, kLinear, kPoly };

std::string_view to_string(KernelType kernel);
KernelType parse_kernel(std::string_view text);

// Soft-margin binary SVC. Labels are 0 (NONCOVID) and 1 (COVID).
struct SvcConfig {
  KernelType kernel = KernelType::kRbf;
  double c = 1.0;
  std::optional<double> gamma;  // empty = auto: 1 / (d * mean column variance)
  int poly_degree = 3;
  double coef0 = 0.0;  // polynomial kernel (gamma <x,y> + coef0)^degree
  double tolerance = 1e-3;
  std::int64_t max_iterations = 10'000'000;

  void validate() const;
  friend bool operator==(const SvcConfig&, const SvcConfig&) = default;
};

struct SvcModel {
  SvcConfig config;
  double gamma = 0.0;  // resolved
  int width = 0;
  Eigen::MatrixXd support_vectors;  // one row per support vector
  Eigen::VectorXd dual_coef;        // alpha_i * y_i with y in {-1, +1}
  double bias = 0.0;
  std::int64_t iterations = 0;
  bool converged = true;

  Eigen::Index support_count() const { return support_vectors.rows(); }
};

double resolve_gamma(const SvcConfig& config, const Eigen::MatrixXd& x);

// Dual problem solved by SMO with second-order working-set selection.
// Training points with alpha = 0 are dropped from the model.
SvcModel fit_svc(const Eigen::MatrixXd& x, std::span<const int> labels, const SvcConfig& config);
SvcModel fit_svc(const FeatureMatrix& x, std::span<const int> labels, const SvcConfig& config);

// f(x) = sum_i alpha_i y_i K(x_i, x) + b; positive means COVID.
std::vector<double> decision_score(const SvcModel& model, const Eigen::MatrixXd& x);
std::vector<double> decision_score(const SvcModel& model, const FeatureMatrix& x);

// COVID iff the score is strictly positive; a zero score is NONCOVID.
int label_from_score(double score);
std::vector<int> predict(const SvcModel& model, const Eigen::MatrixXd& x);
std::vector<int> predict(const SvcModel& model, const FeatureMatrix& x);

// Directory with svc.bin (checksummed parameters) and svc.json (config and
// feature width, for humans and manifests).
void save_svc(const SvcModel& model, const std::filesystem::path& dir);
SvcModel load_svc(const std::filesystem::path& dir);

}  // namespace hybridct
