#include "hybridct/svc.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/hash.hpp"
#include "hybridct/json_io.hpp"

namespace hybridct {

namespace fs = std::filesystem;

std::string_view to_string(KernelType kernel) {
  switch (kernel) {
    case KernelType::kRbf: return "rbf";
    case KernelType::kLinear: return "linear";
    case KernelType::kPoly: return "poly";
  }
  return "?";
}

KernelType parse_kernel(std::string_view text) {
  for (auto k : {KernelType::kRbf, KernelType::kLinear, KernelType::kPoly})
    if (text == to_string(k)) return k;
  fail(ErrorCode::kConfig, "unknown kernel '" + std::string(text) + "' (expected rbf, linear or poly)");
}

void SvcConfig::validate() const {
  require(c > 0.0 && std::isfinite(c), ErrorCode::kConfig, "svc.C must be positive");
  require(!gamma || (*gamma > 0.0 && std::isfinite(*gamma)), ErrorCode::kConfig,
          "svc.gamma must be positive or \"auto\"");
  require(poly_degree >= 1, ErrorCode::kConfig, "svc.poly_degree must be at least 1");
  require(tolerance > 0.0, ErrorCode::kConfig, "svc.tolerance must be positive");
  require(max_iterations >= 1, ErrorCode::kConfig, "svc.max_iterations must be at least 1");
}

double resolve_gamma(const SvcConfig& config, const Eigen::MatrixXd& x) {
  if (config.gamma) return *config.gamma;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double mean_variance =
      (x.rowwise() - mean).colwise().squaredNorm().mean() / static_cast<double>(x.rows());
  const double d = static_cast<double>(x.cols());
  return mean_variance > 0.0 ? 1.0 / (d * mean_variance) : 1.0 / d;
}

namespace {

struct Kernel {
  KernelType type;
  double gamma;
  double coef0;
  int degree;

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                    const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
    switch (type) {
      case KernelType::kLinear: return a.dot(b);
      case KernelType::kPoly: return std::pow(gamma * a.dot(b) + coef0, degree);
      case KernelType::kRbf: return std::exp(-gamma * (a - b).squaredNorm());
    }
    return 0.0;
  }
};

Kernel kernel_of(const SvcModel& m) { return {m.config.kernel, m.gamma, m.config.coef0, m.config.poly_degree}; }

void check_finite(const Eigen::MatrixXd& x, const char* what) {
  require(x.allFinite(), ErrorCode::kInput, std::string(what) + " contain non-finite values");
}

}  // namespace

SvcModel fit_svc(const Eigen::MatrixXd& x, std::span<const int> labels, const SvcConfig& config) {
  config.validate();
  const Eigen::Index n = x.rows();
  require(n >= 2 && x.cols() >= 1, ErrorCode::kInput, "fit_svc needs at least two rows and one column");
  require(static_cast<Eigen::Index>(labels.size()) == n, ErrorCode::kInput,
          "fit_svc: label count does not match row count");
  check_finite(x, "training features");
  std::vector<double> y(static_cast<std::size_t>(n));
  bool has_pos = false, has_neg = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    require(label == 0 || label == 1, ErrorCode::kInput, "fit_svc: labels must be 0 or 1");
    y[static_cast<std::size_t>(i)] = label == 1 ? 1.0 : -1.0;
    (label == 1 ? has_pos : has_neg) = true;
  }
  require(has_pos && has_neg, ErrorCode::kInput, "fit_svc: training labels contain a single class");

  SvcModel model;
  model.config = config;
  model.gamma = resolve_gamma(config, x);
  model.width = static_cast<int>(x.cols());
  const Kernel kernel = kernel_of(model);

  // Q_ij = y_i y_j K(x_i, x_j), precomputed.
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(j)] * kernel(x.row(i), x.row(j));
      q(i, j) = v;
      q(j, i) = v;
    }
  }

  const double c = config.c;
  constexpr double kTau = 1e-12;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
  std::vector<double> grad(static_cast<std::size_t>(n), -1.0);
  auto upper = [&](std::size_t t) { return alpha[t] >= c; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  std::int64_t iter = 0;
  bool converged = false;
  const auto un = static_cast<std::size_t>(n);
  while (iter < config.max_iterations) {
    double gmax = -inf;
    std::size_t i = un;
    for (std::size_t t = 0; t < un; ++t) {
      if (y[t] > 0 ? !upper(t) : !lower(t)) {
        const double v = -y[t] * grad[t];
        if (v >= gmax) {
          gmax = v;
          i = t;
        }
      }
    }
    double gmax2 = -inf;
    double best_obj = inf;
    std::size_t j = un;
    for (std::size_t t = 0; t < un && i < un; ++t) {
      if (y[t] > 0 ? lower(t) : upper(t)) continue;
      const double v = y[t] * grad[t];
      gmax2 = std::max(gmax2, v);
      const double grad_diff = gmax + v;
      if (grad_diff > 0.0) {
        const double a = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) +
                         q(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) -
                         2.0 * y[i] * y[t] * q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
        const double obj = -(grad_diff * grad_diff) / (a > 0.0 ? a : kTau);
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (i == un || j == un || gmax + gmax2 < config.tolerance) {
      converged = true;
      break;
    }
    ++iter;

    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    if (y[i] != y[j]) {
      double a = q(ii, ii) + q(jj, jj) + 2.0 * q(ii, jj);
      if (a <= 0.0) a = kTau;
      const double delta = (-grad[i] - grad[j]) / a;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double a = q(ii, ii) + q(jj, jj) - 2.0 * q(ii, jj);
      if (a <= 0.0) a = kTau;
      const double delta = (grad[i] - grad[j]) / a;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
      } else {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < un; ++t) {
      grad[t] += q(ii, static_cast<Eigen::Index>(t)) * di + q(jj, static_cast<Eigen::Index>(t)) * dj;
    }
  }
  if (!converged) {
    std::clog << "warning: SVC solver stopped at the iteration limit (" << config.max_iterations
              << ") before reaching tolerance " << config.tolerance << "\n";
  }

  // Bias from free support vectors, or the midpoint of the feasible interval.
  double ub = inf, lb = -inf, sum_free = 0.0;
  int free_count = 0;
  for (std::size_t t = 0; t < un; ++t) {
    const double yg = y[t] * grad[t];
    if (upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free_count;
      sum_free += yg;
    }
  }
  const double rho = free_count > 0 ? sum_free / free_count : (ub + lb) / 2.0;
  model.bias = -rho;
  model.iterations = iter;
  model.converged = converged;

  std::vector<Eigen::Index> support;
  for (std::size_t t = 0; t < un; ++t)
    if (alpha[t] > 0.0) support.push_back(static_cast<Eigen::Index>(t));
  model.support_vectors.resize(static_cast<Eigen::Index>(support.size()), x.cols());
  model.dual_coef.resize(static_cast<Eigen::Index>(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) {
    const auto t = static_cast<std::size_t>(support[s]);
    model.support_vectors.row(static_cast<Eigen::Index>(s)) = x.row(support[s]);
    model.dual_coef[static_cast<Eigen::Index>(s)] = alpha[t] * y[t];
  }
  return model;
}

SvcModel fit_svc(const FeatureMatrix& x, std::span<const int> labels, const SvcConfig& config) {
  return fit_svc(Eigen::MatrixXd(x.data.cast<double>()), labels, config);
}

std::vector<double> decision_score(const SvcModel& model, const Eigen::MatrixXd& x) {
  require(x.cols() == model.width, ErrorCode::kInput,
          "SVC expects " + std::to_string(model.width) + " features per row, got " +
              std::to_string(x.cols()));
  check_finite(x, "features");
  const Kernel kernel = kernel_of(model);
  std::vector<double> scores(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double f = model.bias;
    for (Eigen::Index s = 0; s < model.support_count(); ++s)
      f += model.dual_coef[s] * kernel(model.support_vectors.row(s), x.row(r));
    scores[static_cast<std::size_t>(r)] = f;
  }
  return scores;
}

std::vector<double> decision_score(const SvcModel& model, const FeatureMatrix& x) {
  return decision_score(model, Eigen::MatrixXd(x.data.cast<double>()));
}

int label_from_score(double score) { return score > 0.0 ? 1 : 0; }

std::vector<int> predict(const SvcModel& model, const Eigen::MatrixXd& x) {
  std::vector<int> out;
  for (double s : decision_score(model, x)) out.push_back(label_from_score(s));
  return out;
}

std::vector<int> predict(const SvcModel& model, const FeatureMatrix& x) {
  return predict(model, Eigen::MatrixXd(x.data.cast<double>()));
}

namespace {

constexpr std::string_view kSvcMagic = "HCTS1";

}  // namespace

void save_svc(const SvcModel& model, const fs::path& dir) {
  io::ByteWriter w;
  w.put_magic(kSvcMagic);
  w.put_u32(static_cast<std::uint32_t>(model.config.kernel));
  w.put_f64(model.config.c);
  w.put_f64(model.gamma);
  w.put_f64(model.config.coef0);
  w.put_u32(static_cast<std::uint32_t>(model.config.poly_degree));
  w.put_u32(static_cast<std::uint32_t>(model.width));
  w.put_u32(static_cast<std::uint32_t>(model.support_count()));
  w.put_f64(model.bias);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sv = model.support_vectors;
  w.put_array(std::span<const double>(sv.data(), static_cast<std::size_t>(sv.size())));
  w.put_array(std::span<const double>(model.dual_coef.data(), static_cast<std::size_t>(model.dual_coef.size())));
  w.put_u64(fnv1a64(std::span<const std::byte>(w.bytes())));
  io::write_file(dir / "svc.bin", w.bytes());

  Json meta = {{"kernel", std::string(to_string(model.config.kernel))},
               {"C", model.config.c},
               {"gamma", model.config.gamma ? Json(*model.config.gamma) : Json("auto")},
               {"resolved_gamma", model.gamma},
               {"poly_degree", model.config.poly_degree},
               {"coef0", model.config.coef0},
               {"tolerance", model.config.tolerance},
               {"max_iterations", model.config.max_iterations},
               {"feature_width", model.width},
               {"support_vectors", model.support_count()},
               {"iterations", model.iterations},
               {"converged", model.converged}};
  io::write_text_file(dir / "svc.json", meta.dump(2) + "\n");
}

SvcModel load_svc(const fs::path& dir) {
  const fs::path path = dir / "svc.bin";
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, "no SVC model at " + dir.string());
  const auto bytes = io::read_file(path);
  require(bytes.size() >= kSvcMagic.size() + sizeof(std::uint64_t), ErrorCode::kIntegrity,
          path.string() + ": truncated file");
  const std::span<const std::byte> all(bytes);
  const auto body = all.first(all.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, all.last(sizeof(std::uint64_t)).data(), sizeof stored);
  io::ByteReader r(body, path.string());
  if (!r.expect_magic(kSvcMagic)) fail(ErrorCode::kVersionMismatch, path.string() + ": not an HCTS1 model");
  require(fnv1a64(body) == stored, ErrorCode::kIntegrity, path.string() + ": checksum mismatch (truncated or corrupt)");

  SvcModel m;
  const std::uint32_t kernel = r.get_u32();
  require(kernel <= static_cast<std::uint32_t>(KernelType::kPoly), ErrorCode::kIntegrity,
          path.string() + ": unknown kernel id");
  m.config.kernel = static_cast<KernelType>(kernel);
  m.config.c = r.get_f64();
  m.gamma = r.get_f64();
  m.config.gamma = m.gamma;
  m.config.coef0 = r.get_f64();
  m.config.poly_degree = static_cast<int>(r.get_u32());
  m.width = static_cast<int>(r.get_u32());
  const std::uint32_t count = r.get_u32();
  m.bias = r.get_f64();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sv(count, m.width);
  r.get_array(std::span<double>(sv.data(), static_cast<std::size_t>(sv.size())));
  m.support_vectors = sv;
  m.dual_coef.resize(count);
  r.get_array(std::span<double>(m.dual_coef.data(), count));
  require(r.remaining() == 0, ErrorCode::kIntegrity, path.string() + ": trailing bytes");

  // Optional metadata: restores the configured (unresolved) gamma and solver settings.
  const fs::path meta_path = dir / "svc.json";
  if (fs::exists(meta_path)) {
    const Json meta = parse_json_text(io::read_text_file(meta_path), meta_path.string());
    try {
      require(meta.at("feature_width").get<int>() == m.width, ErrorCode::kIntegrity,
              meta_path.string() + ": feature width disagrees with svc.bin");
      if (meta.at("gamma").is_string()) m.config.gamma.reset();
      m.config.tolerance = meta.at("tolerance").get<double>();
      m.config.max_iterations = meta.at("max_iterations").get<std::int64_t>();
      m.iterations = meta.at("iterations").get<std::int64_t>();
      m.converged = meta.at("converged").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kIntegrity, meta_path.string() + ": malformed metadata: " + e.what());
    }
  }
  return m;
}

}  // namespace hybridct
