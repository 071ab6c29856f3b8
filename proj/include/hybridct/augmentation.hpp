#pragma once

#include <string_view>

#include "hybridct/data_ingest.hpp"
#include "hybridct/rng.hpp"
#include "hybridct/tensor.hpp"

namespace hybridct {

enum class FillMode { kReflect, kNearest, kConstant };

std::string_view to_string(FillMode mode);  // "reflect" / "nearest" / "constant"
FillMode parse_fill_mode(std::string_view text);

// Training-time augmentation ranges. Defaults: rotation +-10 deg, 5% width
// and height shifts, shear 0.1, zoom 10%, brightness [0.9, 1.1], reflect fill.
struct AugmentationConfig {
  double rotation_range = 10.0;      // degrees
  double width_shift_range = 0.05;   // fraction of width
  double height_shift_range = 0.05;  // fraction of height
  double shear_range = 0.1;          // shear angle in degrees, Keras convention
  double zoom_range = 0.10;          // zoom factor drawn from [1 - z, 1 + z]
  double brightness_lo = 0.9;
  double brightness_hi = 1.1;
  FillMode fill_mode = FillMode::kReflect;

  void validate() const;
  static AugmentationConfig identity();

  friend bool operator==(const AugmentationConfig&, const AugmentationConfig&) = default;
};

// One sampled realization of the configured transforms.
struct AugmentParams {
  double rotation_deg = 0.0;
  double dx = 0.0;  // pixels
  double dy = 0.0;  // pixels
  double shear_deg = 0.0;
  double zoom = 1.0;
  double brightness = 1.0;

  bool is_geometric_identity() const {
    return rotation_deg == 0.0 && dx == 0.0 && dy == 0.0 && shear_deg == 0.0 && zoom == 1.0;
  }
  friend bool operator==(const AugmentParams&, const AugmentParams&) = default;
};

AugmentParams sample_params(const AugmentationConfig& config, Rng& rng, int width = 224,
                            int height = 224);

// Single composed affine (rotation, shear, zoom, shift about the image
// centre) resampled bilinearly with `fill`, then brightness scaling and a
// clip to [0, 1].
Tensor apply_augmentation(const Tensor& image, const AugmentParams& params,
                          FillMode fill = FillMode::kReflect);

inline ImageTensor apply_augmentation(const ImageTensor& image, const AugmentParams& params,
                                      FillMode fill = FillMode::kReflect) {
  return {apply_augmentation(image.pixels, params, fill), image.source};
}

}  // namespace hybridct
