#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "sketchlab/errors.hpp"
#include "sketchlab/raster.hpp"

namespace sketchlab {

/// Random rigid jitter applied to contour sketches only.
struct AugmentPolicy {
  int d = 25;           // max offset, pixels
  double theta = 7.0;   // max rotation, degrees
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (d < 0) throw ConfigError("AugmentPolicy: d must be >= 0");
    if (!(theta >= 0) || !std::isfinite(theta)) throw ConfigError("AugmentPolicy: theta must be >= 0");
  }
};

struct AugmentDraw {
  int dx = 0;
  int dy = 0;
  double angle = 0;  // degrees
  friend bool operator==(const AugmentDraw&, const AugmentDraw&) = default;
};

inline AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::mt19937_64& rng) {
  policy.validate();
  std::uniform_int_distribution<int> offset(-policy.d, policy.d);
  std::uniform_real_distribution<double> angle(-policy.theta, policy.theta);
  AugmentDraw a;
  a.dx = offset(rng);
  a.dy = offset(rng);
  a.angle = policy.theta > 0 ? angle(rng) : 0.0;
  return a;
}

/// Rotates about the image center, then translates. Nearest-neighbour
/// inverse mapping, white fill, output re-binarized at 0.5.
inline SketchRaster apply_augmentation(const SketchRaster& s, const AugmentDraw& a) {
  if (a.dx == 0 && a.dy == 0 && a.angle == 0) return s;
  const int n = s.size();
  const double c = n / 2.0;
  const double rad = a.angle * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  SketchRaster out(n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double px = x + 0.5 - a.dx - c;
      const double py = y + 0.5 - a.dy - c;
      const double sx = cs * px + sn * py + c;
      const double sy = -sn * px + cs * py + c;
      const int ix = static_cast<int>(std::floor(sx));
      const int iy = static_cast<int>(std::floor(sy));
      if (s.contains(ix, iy) && s.is_stroke(ix, iy)) out.set(x, y, 0.0f);
    }
  }
  return out;
}

inline std::pair<SketchRaster, AugmentDraw> augment_contour(const SketchRaster& s,
                                                            const AugmentPolicy& policy,
                                                            std::mt19937_64& rng) {
  const AugmentDraw a = draw_augmentation(policy, rng);
  return {apply_augmentation(s, a), a};
}

}  // namespace sketchlab
