#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "sketchlab/contour.hpp"
#include "sketchlab/landmarks.hpp"
#include "sketchlab/probe.hpp"

namespace sketchlab {

inline constexpr int kProbeGroupCount = 11;
inline constexpr int kDefaultSketchesPerGroup = 18;
inline constexpr int kDefaultProbeResolution = 256;
/// Half side of the eye window kept fixed in eye-invariant groups (37x37).
inline constexpr int kEyeWindowHalf = 18;

/// Default probe point: the outer left-eye corner of the shared template.
inline PixelPoint template_probe_point(int size) {
  const auto p = face_template(FaceShape{}, size).points[kLeftEyeOuterCorner];
  return {static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y))};
}

namespace detail {

struct GroupPlan {
  int id;
  const char* description;
  int eye_variant;  // -1: eyes vary within the group
};

inline constexpr GroupPlan kGroupPlans[kProbeGroupCount] = {
    {1, "hair added", 0},
    {2, "whiskers, wrinkles and ears added", 1},
    {3, "jaw shape change", 2},
    {4, "brow shape change", 3},
    {5, "eye shape change", -1},
    {6, "eye size change", -1},
    {7, "uncorrelated scribbles", -1},
    {8, "mouth shape change", 4},
    {9, "nose shape change", 5},
    {10, "mouth shape change, eyes of G9", 5},
    {11, "nose shape change, eyes of G8", 4},
};

inline FaceShape with_eye_variant(FaceShape f, int variant, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(variant) * 7919ull + 17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  f.eye_width += 0.012 * u(rng);
  f.eye_open += 0.008 * u(rng);
  f.eye_lower = 0.8 + 0.15 * u(rng);
  f.eye_tilt = 0.06 * u(rng);
  return f;
}

inline void add_curve(SketchRaster& s, std::mt19937_64& rng, Point2 start, double heading,
                      double step, int segments, double bend) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Point2> pts{start};
  for (int i = 0; i < segments; ++i) {
    heading += bend * u(rng);
    const Point2 last = pts.back();
    pts.push_back({last.x + step * std::cos(heading), last.y + step * std::sin(heading)});
  }
  draw_polyline(s, pts, false);
}

inline void add_hair(SketchRaster& s, std::mt19937_64& rng) {
  const double n = s.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int strands = 5 + static_cast<int>(u(rng) * 10);
  for (int i = 0; i < strands; ++i) {
    const double t = u(rng);
    const Point2 start{n * (0.25 + 0.5 * t), n * (0.10 + 0.12 * u(rng))};
    const double heading = std::numbers::pi * (1.0 + t) + 0.4 * (u(rng) - 0.5);
    add_curve(s, rng, start, heading, 0.03 * n, 3 + static_cast<int>(u(rng) * 4), 0.5);
  }
}

inline void add_face_marks(SketchRaster& s, std::mt19937_64& rng) {
  const double n = s.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int kind = static_cast<int>(u(rng) * 3);
  if (kind == 0) {  // whiskers on both cheeks
    const int count = 2 + static_cast<int>(u(rng) * 3);
    for (int i = 0; i < count; ++i) {
      const double y = n * (0.62 + 0.05 * u(rng));
      const double len = n * (0.08 + 0.06 * u(rng));
      const double slope = 0.3 * (u(rng) - 0.5);
      draw_segment(s, {n * 0.40, y}, {n * 0.40 - len, y + slope * len});
      draw_segment(s, {n * 0.60, y}, {n * 0.60 + len, y + slope * len});
    }
  } else if (kind == 1) {  // forehead wrinkles
    const int count = 1 + static_cast<int>(u(rng) * 3);
    for (int i = 0; i < count; ++i) {
      const double y = n * (0.20 + 0.06 * u(rng));
      std::vector<Point2> pts;
      for (int k = 0; k <= 6; ++k) {
        const double x = n * (0.38 + 0.24 * k / 6.0);
        pts.push_back({x, y + n * 0.01 * std::sin(k + 6 * u(rng))});
      }
      draw_polyline(s, pts, false);
    }
  } else {  // ears
    const double h = n * (0.12 + 0.05 * u(rng));
    const double w = n * (0.03 + 0.02 * u(rng));
    const double top = n * (0.40 + 0.04 * u(rng));
    for (int side : {-1, 1}) {
      std::vector<Point2> pts;
      for (int k = 0; k <= 8; ++k) {
        const double a = std::numbers::pi * k / 8.0;
        const double x0 = side < 0 ? n * 0.22 : n * 0.78;
        pts.push_back({x0 + side * w * std::sin(a), top + h * (1 - std::cos(a)) / 2});
      }
      draw_polyline(s, pts, false);
    }
  }
}

inline SketchRaster scribble_sketch(int size, std::mt19937_64& rng) {
  SketchRaster s(size);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int strokes = 3 + static_cast<int>(u(rng) * 6);
  for (int i = 0; i < strokes; ++i) {
    const Point2 start{size * (0.1 + 0.8 * u(rng)), size * (0.1 + 0.8 * u(rng))};
    add_curve(s, rng, start, 2 * std::numbers::pi * u(rng), 0.06 * size,
              4 + static_cast<int>(u(rng) * 8), 1.0);
  }
  return s;
}

inline void paste_window(SketchRaster& dst, const SketchRaster& src, const PixelWindow& w) {
  for (int y = std::max(0, w.y0); y <= std::min(dst.size() - 1, w.y1); ++y) {
    for (int x = std::max(0, w.x0); x <= std::min(dst.size() - 1, w.x1); ++x) {
      dst.set(x, y, src.at(x, y));
    }
  }
}

}  // namespace detail

/// Eleven groups of template-face sketches, each varying one region. In
/// eye-invariant groups the 37x37 window around the probe point is copied
/// from a reference rendering of the group's eye variant, so G8/G11 and
/// G9/G10 share identical eye pixels.
inline std::vector<ProbeGroup> generate_synthetic_probe_groups(
    std::uint64_t seed, int n_per_group = kDefaultSketchesPerGroup,
    int size = kDefaultProbeResolution) {
  if (n_per_group < 2) throw ConfigError("probe groups need at least 2 sketches each");
  if (size < kMinRenderSize) throw ConfigError("probe group resolution must be >= 64");
  const PixelPoint anchor = template_probe_point(size);
  const PixelWindow eye_window = centered_window(anchor, kEyeWindowHalf);

  std::vector<ProbeGroup> groups;
  for (const auto& plan : detail::kGroupPlans) {
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(plan.id)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const FaceShape base = plan.eye_variant >= 0
                               ? detail::with_eye_variant(FaceShape{}, plan.eye_variant, seed)
                               : detail::with_eye_variant(FaceShape{}, 100 + plan.id, seed);
    const SketchRaster eye_reference = render_contour(face_template(base, size), size);

    ProbeGroup g{plan.id, plan.description, {}, plan.eye_variant >= 0};
    for (int k = 0; k < n_per_group; ++k) {
      FaceShape f = base;
      SketchRaster s;
      switch (plan.id) {
        case 3:
          f.jaw_rx += 0.025 * u(rng);
          f.jaw_ry += 0.03 * u(rng);
          f.jaw_taper = 0.1 + 0.1 * u(rng);
          break;
        case 4:
          f.brow_y += 0.012 * u(rng);
          f.brow_arch += 0.012 * u(rng);
          f.brow_tilt += 0.025 * u(rng);
          break;
        case 5:
          f.eye_open += 0.01 * u(rng);
          f.eye_lower = 0.8 + 0.2 * u(rng);
          f.eye_tilt += 0.1 * u(rng);
          break;
        case 6: {
          const double k_size = 1.0 + 0.25 * u(rng);
          f.eye_width *= k_size;
          f.eye_open *= k_size;
          break;
        }
        case 8:
        case 10:
          f.mouth_y += 0.02 * u(rng);
          f.mouth_half_width += 0.025 * u(rng);
          f.lip_upper += 0.01 * u(rng);
          f.lip_lower += 0.012 * u(rng);
          f.mouth_open = std::max(0.0, f.mouth_open + 0.01 * u(rng));
          break;
        case 9:
        case 11:
          f.nose_tip += 0.025 * u(rng);
          f.nose_half_width += 0.015 * u(rng);
          f.nose_base_y = f.nose_tip + 0.035 + 0.01 * u(rng);
          f.nostril_drop += 0.008 * u(rng);
          break;
        default:
          break;
      }
      if (plan.id == 7) {
        s = detail::scribble_sketch(size, rng);
      } else {
        s = render_contour(face_template(f, size), size);
        if (plan.id == 1) detail::add_hair(s, rng);
        if (plan.id == 2) detail::add_face_marks(s, rng);
      }
      if (g.eye_invariant) detail::paste_window(s, eye_reference, eye_window);
      g.sketches.push_back(std::move(s));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace sketchlab
