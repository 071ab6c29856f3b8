#include "hybridct/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hybridct/error.hpp"

namespace hybridct {

std::string_view to_string(FillMode mode) {
  switch (mode) {
    case FillMode::kReflect: return "reflect";
    case FillMode::kNearest: return "nearest";
    case FillMode::kConstant: return "constant";
  }
  return "reflect";
}

FillMode parse_fill_mode(std::string_view text) {
  for (FillMode m : {FillMode::kReflect, FillMode::kNearest, FillMode::kConstant})
    if (text == to_string(m)) return m;
  fail(ErrorCode::kConfig, "unknown fill_mode '" + std::string(text) + "'");
}

void AugmentationConfig::validate() const {
  require(rotation_range >= 0 && width_shift_range >= 0 && height_shift_range >= 0 &&
              shear_range >= 0 && zoom_range >= 0 && brightness_lo >= 0,
          ErrorCode::kConfig, "augmentation ranges must be non-negative");
  require(brightness_lo <= brightness_hi, ErrorCode::kConfig,
          "brightness_range lower bound exceeds upper bound");
  require(zoom_range < 1.0, ErrorCode::kConfig, "zoom_range must be below 1");
}

AugmentationConfig AugmentationConfig::identity() {
  AugmentationConfig c;
  c.rotation_range = c.width_shift_range = c.height_shift_range = c.shear_range = c.zoom_range = 0.0;
  c.brightness_lo = c.brightness_hi = 1.0;
  return c;
}

namespace {

// Draws uniformly from [-range, range]; a zero range consumes no randomness
// and yields exactly zero.
double symmetric(Rng& rng, double range) { return range == 0.0 ? 0.0 : rng.uniform(-range, range); }

// Half-sample symmetric reflection (d c b a | a b c d | d c b a).
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

AugmentParams sample_params(const AugmentationConfig& config, Rng& rng, int width, int height) {
  AugmentParams p;
  p.rotation_deg = symmetric(rng, config.rotation_range);
  p.dx = symmetric(rng, config.width_shift_range) * width;
  p.dy = symmetric(rng, config.height_shift_range) * height;
  p.shear_deg = symmetric(rng, config.shear_range);
  p.zoom = config.zoom_range == 0.0 ? 1.0 : rng.uniform(1.0 - config.zoom_range, 1.0 + config.zoom_range);
  p.brightness = config.brightness_lo == config.brightness_hi
                     ? config.brightness_lo
                     : rng.uniform(config.brightness_lo, config.brightness_hi);
  return p;
}

Tensor apply_augmentation(const Tensor& image, const AugmentParams& params, FillMode fill) {
  Tensor out;
  if (params.is_geometric_identity()) {
    out = image;
  } else {
    out = Tensor(image.height, image.width, image.channels);
    // Inverse map from output to input coordinates, as in Keras'
    // apply_affine_transform: M = rotation * shear * zoom, then the shift.
    const double theta = params.rotation_deg * std::numbers::pi / 180.0;
    const double shear = params.shear_deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    // rotation [[c, -s], [s, c]] * shear [[1, -sin(sh)], [0, cos(sh)]] * zoom z*I,
    // in (x, y) order.
    const double z = params.zoom;
    const double m00 = c * z;
    const double m01 = (-c * std::sin(shear) - s * std::cos(shear)) * z;
    const double m10 = s * z;
    const double m11 = (-s * std::sin(shear) + c * std::cos(shear)) * z;
    const double cx = (image.width - 1) * 0.5;
    const double cy = (image.height - 1) * 0.5;
    const int channels = image.channels;

    auto sample = [&](int y, int x, int ch) -> float {
      if (x < 0 || x >= image.width || y < 0 || y >= image.height) {
        switch (fill) {
          case FillMode::kConstant: return 0.0f;
          case FillMode::kNearest:
            x = std::clamp(x, 0, image.width - 1);
            y = std::clamp(y, 0, image.height - 1);
            break;
          case FillMode::kReflect:
            x = reflect_index(x, image.width);
            y = reflect_index(y, image.height);
            break;
        }
      }
      return image.at(y, x, ch);
    };

    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const double ox = x - cx, oy = y - cy;
        const double sx = cx + m00 * ox + m01 * oy + params.dx;
        const double sy = cy + m10 * ox + m11 * oy + params.dy;
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const float fx = static_cast<float>(sx - x0);
        const float fy = static_cast<float>(sy - y0);
        for (int ch = 0; ch < channels; ++ch) {
          const float top = sample(y0, x0, ch) * (1.0f - fx) + sample(y0, x0 + 1, ch) * fx;
          const float bottom = sample(y0 + 1, x0, ch) * (1.0f - fx) + sample(y0 + 1, x0 + 1, ch) * fx;
          out.at(y, x, ch) = top * (1.0f - fy) + bottom * fy;
        }
      }
    }
  }
  if (params.brightness != 1.0) {
    const auto factor = static_cast<float>(params.brightness);
    for (float& v : out.data) v *= factor;
  }
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace hybridct
