#include "hybridct/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "hybridct/binary_io.hpp"
#include "hybridct/error.hpp"
#include "hybridct/json_io.hpp"

namespace hybridct {

namespace fs = std::filesystem;

std::string_view to_string(FeatureStage stage) {
  switch (stage) {
    case FeatureStage::kRaw: return "RAW";
    case FeatureStage::kStandardized: return "STANDARDIZED";
    case FeatureStage::kReduced: return "REDUCED";
    case FeatureStage::kStacked: return "STACKED";
  }
  return "?";
}

FeatureStage parse_feature_stage(std::string_view text) {
  for (auto s : {FeatureStage::kRaw, FeatureStage::kStandardized, FeatureStage::kReduced,
                 FeatureStage::kStacked}) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorCode::kParse, "unknown feature stage '" + std::string(text) + "'");
}

FeatureMatrix extract_features(const Model& model, const ImageSource& images, Split split,
                               std::vector<std::string> record_ids,
                               std::vector<double>* probabilities) {
  require(record_ids.size() == images.size(), ErrorCode::kInput,
          "extract_features: record id count does not match image count");
  const int width = model.head_config().dense_width;
  FeatureMatrix out;
  out.data.resize(static_cast<Eigen::Index>(images.size()), width);
  out.stage = FeatureStage::kRaw;
  out.provenance = {{model.id()}, {width}, split, std::move(record_ids)};
  if (probabilities) probabilities->clear();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const HeadOutput h = model.infer(images.image(i));
    out.data.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXf>(h.features.data(), width);
    if (probabilities) probabilities->push_back(h.probability);
  }
  return out;
}

ScalerParams fit_scaler(const FeatureMatrix& train) {
  require(train.rows() >= 2 && train.cols() >= 1, ErrorCode::kInput,
          "fit_scaler needs at least two rows and one column");
  const Eigen::MatrixXd x = train.data.cast<double>();
  ScalerParams p;
  p.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - p.mean.transpose();
  p.std = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt().transpose();
  return p;
}

FeatureMatrix apply_scaler(const FeatureMatrix& x, const ScalerParams& params) {
  require(x.cols() == params.mean.size(), ErrorCode::kInput,
          "apply_scaler: matrix has " + std::to_string(x.cols()) + " columns, scaler expects " +
              std::to_string(params.mean.size()));
  FeatureMatrix out{FloatMatrix(x.rows(), x.cols()), FeatureStage::kStandardized, x.provenance};
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double s = params.std[j];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out.data(i, j) = s > 0.0 ? static_cast<float>((x.data(i, j) - params.mean[j]) / s) : 0.0f;
    }
  }
  return out;
}

int select_k(std::span<const double> ratios, double target) {
  require(!ratios.empty(), ErrorCode::kInput, "select_k: empty ratio vector");
  require(target > 0.0 && target <= 1.0, ErrorCode::kConfig, "variance target must lie in (0, 1]");
  double sum = 0.0;
  for (double r : ratios) sum += r;
  require(sum <= 1.0 + 1e-9, ErrorCode::kInput, "select_k: ratios sum to more than 1");
  // The tolerance absorbs rounding when the target is exactly reachable
  // (e.g. 1.0 on full-rank data).
  double cumulative = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    cumulative += ratios[i];
    if (cumulative >= target - 1e-12) return static_cast<int>(i + 1);
  }
  return static_cast<int>(ratios.size());
}

PcaParams fit_pca(const FeatureMatrix& train, double variance_target) {
  require(train.rows() >= 2, ErrorCode::kInput, "fit_pca needs at least two rows");
  require(train.cols() >= 1, ErrorCode::kInput, "fit_pca needs at least one column");
  const Eigen::Index d = train.cols();
  const Eigen::MatrixXd x = train.data.cast<double>();
  PcaParams p;
  p.variance_target = variance_target;
  p.center = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - p.center.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::kNumeric, "covariance eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  Eigen::VectorXd values = solver.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd axes = solver.eigenvectors().rowwise().reverse();
  const double total = values.sum();

  std::vector<double> ratios(static_cast<std::size_t>(d), 0.0);
  if (total > 0.0) {
    for (Eigen::Index i = 0; i < d; ++i) ratios[static_cast<std::size_t>(i)] = values[i] / total;
  }
  const int k = total > 0.0 ? select_k(ratios, variance_target) : 1;

  p.components.resize(k, d);
  p.explained_variance.resize(k);
  p.explained_variance_ratio.resize(k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd axis = axes.col(i);
    Eigen::Index largest = 0;
    axis.cwiseAbs().maxCoeff(&largest);
    if (axis[largest] < 0.0) axis = -axis;
    p.components.row(i) = axis.transpose();
    p.explained_variance[i] = values[i];
    p.explained_variance_ratio[i] = ratios[static_cast<std::size_t>(i)];
  }
  return p;
}

FeatureMatrix transform_pca(const FeatureMatrix& x, const PcaParams& params) {
  require(x.cols() == params.d(), ErrorCode::kInput,
          "transform_pca: matrix has " + std::to_string(x.cols()) + " columns, PCA expects " +
              std::to_string(params.d()));
  const Eigen::MatrixXd centered = x.data.cast<double>().rowwise() - params.center.transpose();
  FeatureMatrix out{(centered * params.components.transpose()).cast<float>(), FeatureStage::kReduced,
                    x.provenance};
  if (out.provenance.backbones.size() == 1) out.provenance.widths = {static_cast<int>(params.k())};
  return out;
}

Eigen::MatrixXd reconstruct(const FeatureMatrix& reduced, const PcaParams& params) {
  require(reduced.cols() == params.k(), ErrorCode::kInput, "reconstruct: width does not match PCA k");
  Eigen::MatrixXd x = reduced.data.cast<double>() * params.components;
  x.rowwise() += params.center.transpose();
  return x;
}

FeatureMatrix stack_features(std::span<const FeatureMatrix> parts) {
  require(!parts.empty(), ErrorCode::kInput, "stack_features: no parts");
  const FeatureMatrix& first = parts.front();
  Eigen::Index width = 0;
  FeatureMatrix out;
  out.stage = FeatureStage::kStacked;
  out.provenance.split = first.provenance.split;
  out.provenance.record_ids = first.provenance.record_ids;
  for (const FeatureMatrix& part : parts) {
    require(part.rows() == first.rows(), ErrorCode::kAlignment,
            "stack_features: parts have different row counts");
    require(part.provenance.split == first.provenance.split, ErrorCode::kAlignment,
            "stack_features: parts come from different splits");
    require(part.provenance.record_ids == first.provenance.record_ids, ErrorCode::kAlignment,
            "stack_features: parts list records in different orders");
    require(part.provenance.backbones.size() == part.provenance.widths.size(), ErrorCode::kAlignment,
            "stack_features: inconsistent part provenance");
    for (std::size_t b = 0; b < part.provenance.backbones.size(); ++b) {
      const BackboneId id = part.provenance.backbones[b];
      require(out.provenance.backbones.empty() || out.provenance.backbones.back() < id,
              ErrorCode::kAlignment, "stack_features: parts are not in canonical backbone order");
      out.provenance.backbones.push_back(id);
      out.provenance.widths.push_back(part.provenance.widths[b]);
    }
    width += part.cols();
  }
  out.data.resize(first.rows(), width);
  Eigen::Index col = 0;
  for (const FeatureMatrix& part : parts) {
    out.data.middleCols(col, part.cols()) = part.data;
    col += part.cols();
  }
  return out;
}

void FusionConfig::validate() const {
  require(variance_target > 0.0 && variance_target <= 1.0, ErrorCode::kConfig,
          "fusion.variance_target must lie in (0, 1]");
}

int FusionArtifact::stacked_width() const {
  if (stacked_pca) return static_cast<int>(stacked_pca->k());
  int width = 0;
  for (const auto& p : parts) width += static_cast<int>(p.pca ? p.pca->k() : p.scaler.mean.size());
  return width;
}

namespace {

void check_canonical(std::span<const FeatureMatrix> raw) {
  require(raw.size() == kCanonicalBackbones.size(), ErrorCode::kAlignment,
          "fusion needs features from all three backbones");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    require(raw[i].provenance.backbones.size() == 1 &&
                raw[i].provenance.backbones[0] == kCanonicalBackbones[i],
            ErrorCode::kAlignment,
            "fusion inputs must be single-backbone features in canonical order");
    require(raw[i].stage == FeatureStage::kRaw, ErrorCode::kInput, "fusion inputs must be RAW features");
  }
}

}  // namespace

FusionArtifact fit_fusion(std::span<const FeatureMatrix> raw_train, const FusionConfig& config) {
  config.validate();
  check_canonical(raw_train);
  FusionArtifact fusion;
  fusion.config = config;
  std::vector<FeatureMatrix> standardized;
  for (const FeatureMatrix& raw : raw_train) {
    BackboneFusion part;
    part.backbone = raw.provenance.backbones[0];
    part.scaler = fit_scaler(raw);
    standardized.push_back(apply_scaler(raw, part.scaler));
    if (!config.pca_after_stack) part.pca = fit_pca(standardized.back(), config.variance_target);
    fusion.parts.push_back(std::move(part));
  }
  if (config.pca_after_stack) {
    fusion.stacked_pca = fit_pca(stack_features(standardized), config.variance_target);
  }
  return fusion;
}

FeatureMatrix apply_fusion(const FusionArtifact& fusion, std::span<const FeatureMatrix> raw) {
  check_canonical(raw);
  require(fusion.parts.size() == raw.size(), ErrorCode::kIntegrity, "fusion artifact is incomplete");
  std::vector<FeatureMatrix> reduced;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const BackboneFusion& part = fusion.parts[i];
    FeatureMatrix x = apply_scaler(raw[i], part.scaler);
    reduced.push_back(part.pca ? transform_pca(x, *part.pca) : std::move(x));
  }
  FeatureMatrix stacked = stack_features(reduced);
  if (fusion.stacked_pca) {
    const FeatureProvenance provenance = stacked.provenance;
    stacked = transform_pca(stacked, *fusion.stacked_pca);
    stacked.stage = FeatureStage::kStacked;
    stacked.provenance = provenance;
    stacked.provenance.widths = {static_cast<int>(fusion.stacked_pca->k())};
    stacked.provenance.backbones = {kCanonicalBackbones.begin(), kCanonicalBackbones.end()};
  }
  return stacked;
}

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vector_from(const Json& j, Eigen::Index expected, const char* what) {
  const auto values = j.get<std::vector<double>>();
  require(expected < 0 || static_cast<Eigen::Index>(values.size()) == expected, ErrorCode::kIntegrity,
          std::string("fusion artifact: wrong length for ") + what);
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json pca_to_json(const PcaParams& p) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = p.components;
  return {{"k", p.k()},
          {"d", p.d()},
          {"variance_target", p.variance_target},
          {"center", to_vector(p.center)},
          {"components", std::vector<double>(rows.data(), rows.data() + rows.size())},
          {"explained_variance", to_vector(p.explained_variance)},
          {"explained_variance_ratio", to_vector(p.explained_variance_ratio)}};
}

PcaParams pca_from_json(const Json& j) {
  PcaParams p;
  const auto k = j.at("k").get<Eigen::Index>();
  const auto d = j.at("d").get<Eigen::Index>();
  p.variance_target = j.at("variance_target").get<double>();
  p.center = vector_from(j.at("center"), d, "center");
  const Eigen::VectorXd flat = vector_from(j.at("components"), k * d, "components");
  p.components = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), k, d);
  p.explained_variance = vector_from(j.at("explained_variance"), k, "explained_variance");
  p.explained_variance_ratio = vector_from(j.at("explained_variance_ratio"), k, "explained_variance_ratio");
  return p;
}

}  // namespace

void save_fusion(const FusionArtifact& fusion, const fs::path& path) {
  Json parts = Json::object();
  for (const BackboneFusion& part : fusion.parts) {
    Json entry = {{"scaler", {{"mean", to_vector(part.scaler.mean)}, {"std", to_vector(part.scaler.std)}}}};
    if (part.pca) entry["pca"] = pca_to_json(*part.pca);
    parts[std::string(to_string(part.backbone))] = entry;
  }
  Json j = {{"format_version", kFusionFormatVersion},
            {"variance_target", fusion.config.variance_target},
            {"pca_after_stack", fusion.config.pca_after_stack},
            {"backbones", parts}};
  if (fusion.stacked_pca) j["stacked_pca"] = pca_to_json(*fusion.stacked_pca);
  io::write_text_file(path, j.dump(1) + "\n");
}

FusionArtifact load_fusion(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, "no fusion artifact at " + path.string());
  const Json j = parse_json_text(io::read_text_file(path), path.string());
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFusionFormatVersion) {
      fail(ErrorCode::kVersionMismatch, path.string() + ": fusion format version " +
                                            std::to_string(version) + ", expected " +
                                            std::to_string(kFusionFormatVersion));
    }
    FusionArtifact fusion;
    fusion.config.variance_target = j.at("variance_target").get<double>();
    fusion.config.pca_after_stack = j.at("pca_after_stack").get<bool>();
    const Json& parts = j.at("backbones");
    for (BackboneId id : kCanonicalBackbones) {
      const std::string key(to_string(id));
      if (!parts.contains(key)) fail(ErrorCode::kIntegrity, path.string() + ": missing backbone " + key);
      const Json& entry = parts.at(key);
      BackboneFusion part;
      part.backbone = id;
      part.scaler.mean = vector_from(entry.at("scaler").at("mean"), -1, "scaler mean");
      part.scaler.std = vector_from(entry.at("scaler").at("std"), part.scaler.mean.size(), "scaler std");
      if (entry.contains("pca")) {
        part.pca = pca_from_json(entry.at("pca"));
        require(part.pca->d() == part.scaler.mean.size(), ErrorCode::kIntegrity,
                path.string() + ": PCA width does not match scaler for " + key);
      }
      require(part.pca.has_value() != fusion.config.pca_after_stack, ErrorCode::kIntegrity,
              path.string() + ": PCA placement inconsistent for " + key);
      fusion.parts.push_back(std::move(part));
    }
    require(parts.size() == kCanonicalBackbones.size(), ErrorCode::kIntegrity,
            path.string() + ": unexpected backbone entries");
    if (fusion.config.pca_after_stack) {
      require(j.contains("stacked_pca"), ErrorCode::kIntegrity, path.string() + ": missing stacked_pca");
      fusion.stacked_pca = pca_from_json(j.at("stacked_pca"));
    }
    return fusion;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIntegrity, path.string() + ": malformed fusion artifact: " + e.what());
  }
}

namespace {

fs::path meta_path(const fs::path& path) {
  fs::path p = path;
  p += ".meta";
  return p;
}

}  // namespace

void write_features(const fs::path& path, const FeatureMatrix& features, const std::string& config_hash) {
  require(features.provenance.record_ids.size() == static_cast<std::size_t>(features.rows()),
          ErrorCode::kIntegrity, "feature matrix rows do not match its record ids");
  io::ByteWriter w;
  w.put_magic("HCTF1");
  w.put_u32(static_cast<std::uint32_t>(features.rows()));
  w.put_u32(static_cast<std::uint32_t>(features.cols()));
  w.put_array(std::span<const float>(features.data.data(), static_cast<std::size_t>(features.data.size())));
  io::write_file(path, w.bytes());

  std::vector<std::string> backbones;
  for (BackboneId id : features.provenance.backbones) backbones.emplace_back(to_string(id));
  const Json meta = {{"stage", std::string(to_string(features.stage))},
                     {"backbones", backbones},
                     {"widths", features.provenance.widths},
                     {"split", std::string(to_string(features.provenance.split))},
                     {"record_ids", features.provenance.record_ids},
                     {"config_hash", config_hash}};
  io::write_text_file(meta_path(path), meta.dump(1) + "\n");
}

FeatureMatrix read_features(const fs::path& path, std::string* config_hash) {
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, "no feature file at " + path.string());
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  if (!r.expect_magic("HCTF1")) fail(ErrorCode::kVersionMismatch, path.string() + ": not an HCTF1 feature file");
  const std::uint32_t n = r.get_u32();
  const std::uint32_t d = r.get_u32();
  FeatureMatrix out;
  out.data.resize(n, d);
  r.get_array(std::span<float>(out.data.data(), static_cast<std::size_t>(out.data.size())));
  require(r.remaining() == 0, ErrorCode::kIntegrity, path.string() + ": trailing bytes");

  const fs::path mp = meta_path(path);
  if (!fs::exists(mp)) fail(ErrorCode::kNotFound, "missing feature sidecar " + mp.string());
  const Json meta = parse_json_text(io::read_text_file(mp), mp.string());
  try {
    out.stage = parse_feature_stage(meta.at("stage").get<std::string>());
    for (const auto& b : meta.at("backbones")) out.provenance.backbones.push_back(parse_backbone(b.get<std::string>()));
    out.provenance.widths = meta.at("widths").get<std::vector<int>>();
    const auto split = parse_split(meta.at("split").get<std::string>());
    if (!split) fail(ErrorCode::kIntegrity, mp.string() + ": unknown split");
    out.provenance.split = *split;
    out.provenance.record_ids = meta.at("record_ids").get<std::vector<std::string>>();
    if (config_hash) *config_hash = meta.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIntegrity, mp.string() + ": malformed sidecar: " + e.what());
  }
  require(out.provenance.record_ids.size() == n, ErrorCode::kIntegrity,
          mp.string() + ": record count does not match " + path.string());
  return out;
}

}  // namespace hybridct
