#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "hybridct/augmentation.hpp"
#include "hybridct/error.hpp"
#include "hybridct/head.hpp"
#include "hybridct/transfer.hpp"

// JSON mappings for the configuration structs. Readers take defaults for
// missing keys and reject unknown ones, so typos do not silently fall back
// to defaults.
namespace hybridct {

using Json = nlohmann::json;

inline void reject_unknown_keys(const Json& j, std::string_view section,
                                std::initializer_list<std::string_view> known) {
  if (!j.is_object()) fail(ErrorCode::kConfig, std::string(section) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) fail(ErrorCode::kConfig, "unknown key '" + key + "' in " + std::string(section));
  }
}

template <typename T>
T json_get(const Json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("invalid value for '") + key + "': " + e.what());
  }
}

inline void to_json(Json& j, const HeadConfig& c) {
  j = {{"dense_width", c.dense_width}, {"dropout_rate", c.dropout_rate}};
}
inline void from_json(const Json& j, HeadConfig& c) {
  reject_unknown_keys(j, "head", {"dense_width", "dropout_rate"});
  const HeadConfig d;
  c.dense_width = json_get(j, "dense_width", d.dense_width);
  c.dropout_rate = json_get(j, "dropout_rate", d.dropout_rate);
}

inline void to_json(Json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"early_stop_patience", c.early_stop_patience},
       {"restore_best_weights", c.restore_best_weights},
       {"lr_reduce_factor", c.lr_reduce_factor},
       {"lr_plateau_patience", c.lr_plateau_patience},
       {"lr_min", c.lr_min},
       {"min_delta", c.min_delta},
       {"seed", c.seed}};
}
inline void from_json(const Json& j, TrainConfig& c) {
  reject_unknown_keys(j, "train",
                      {"learning_rate", "epochs", "batch_size", "early_stop_patience",
                       "restore_best_weights", "lr_reduce_factor", "lr_plateau_patience", "lr_min",
                       "min_delta", "seed"});
  const TrainConfig d;
  c.learning_rate = json_get(j, "learning_rate", d.learning_rate);
  c.epochs = json_get(j, "epochs", d.epochs);
  c.batch_size = json_get(j, "batch_size", d.batch_size);
  c.early_stop_patience = json_get(j, "early_stop_patience", d.early_stop_patience);
  c.restore_best_weights = json_get(j, "restore_best_weights", d.restore_best_weights);
  c.lr_reduce_factor = json_get(j, "lr_reduce_factor", d.lr_reduce_factor);
  c.lr_plateau_patience = json_get(j, "lr_plateau_patience", d.lr_plateau_patience);
  c.lr_min = json_get(j, "lr_min", d.lr_min);
  c.min_delta = json_get(j, "min_delta", d.min_delta);
  c.seed = json_get(j, "seed", d.seed);
}

// Keys mirror the Keras ImageDataGenerator argument names.
inline void to_json(Json& j, const AugmentationConfig& c) {
  j = {{"rotation_range", c.rotation_range},
       {"width_shift_range", c.width_shift_range},
       {"height_shift_range", c.height_shift_range},
       {"shear_range", c.shear_range},
       {"zoom_range", c.zoom_range},
       {"brightness_range", {c.brightness_lo, c.brightness_hi}},
       {"fill_mode", std::string(to_string(c.fill_mode))}};
}
inline void from_json(const Json& j, AugmentationConfig& c) {
  reject_unknown_keys(j, "augmentation",
                      {"rotation_range", "width_shift_range", "height_shift_range", "shear_range",
                       "zoom_range", "brightness_range", "fill_mode"});
  const AugmentationConfig d;
  c.rotation_range = json_get(j, "rotation_range", d.rotation_range);
  c.width_shift_range = json_get(j, "width_shift_range", d.width_shift_range);
  c.height_shift_range = json_get(j, "height_shift_range", d.height_shift_range);
  c.shear_range = json_get(j, "shear_range", d.shear_range);
  c.zoom_range = json_get(j, "zoom_range", d.zoom_range);
  const auto brightness =
      json_get(j, "brightness_range", std::vector<double>{d.brightness_lo, d.brightness_hi});
  if (brightness.size() != 2) fail(ErrorCode::kConfig, "brightness_range must be [lo, hi]");
  c.brightness_lo = brightness[0];
  c.brightness_hi = brightness[1];
  c.fill_mode = parse_fill_mode(json_get(j, "fill_mode", std::string(to_string(d.fill_mode))));
}

inline void to_json(Json& j, const ParamCounts& c) {
  j = {{"total", c.total},
       {"trainable", c.trainable},
       {"frozen", c.frozen},
       {"backbone", c.backbone},
       {"head_trainable", c.head_trainable},
       {"reduction_factor", c.reduction_factor}};
}
inline void from_json(const Json& j, ParamCounts& c) {
  c.total = j.at("total").get<std::size_t>();
  c.trainable = j.at("trainable").get<std::size_t>();
  c.frozen = j.at("frozen").get<std::size_t>();
  c.backbone = j.at("backbone").get<std::size_t>();
  c.head_trainable = j.at("head_trainable").get<std::size_t>();
  c.reduction_factor = j.at("reduction_factor").get<double>();
}

inline void to_json(Json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},           {"train_loss", r.train_loss},
       {"train_accuracy", r.train_accuracy}, {"val_loss", r.val_loss},
       {"val_accuracy", r.val_accuracy},     {"learning_rate", r.learning_rate}};
}
inline void from_json(const Json& j, EpochRecord& r) {
  r.epoch = j.at("epoch").get<int>();
  r.train_loss = j.at("train_loss").get<double>();
  r.train_accuracy = j.at("train_accuracy").get<double>();
  r.val_loss = j.at("val_loss").get<double>();
  r.val_accuracy = j.at("val_accuracy").get<double>();
  r.learning_rate = j.at("learning_rate").get<double>();
}

inline void to_json(Json& j, const TrainingHistory& h) {
  j = {{"epochs", h.epochs}, {"best_epoch", h.best_epoch}, {"early_stopped", h.early_stopped}};
}
inline void from_json(const Json& j, TrainingHistory& h) {
  h.epochs = j.at("epochs").get<std::vector<EpochRecord>>();
  h.best_epoch = j.at("best_epoch").get<int>();
  h.early_stopped = j.at("early_stopped").get<bool>();
}

inline Json parse_json_text(std::string_view text, std::string_view source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // Byte offset -> line number for the error message.
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    fail(ErrorCode::kParse, std::string(source) + ":" + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace hybridct
