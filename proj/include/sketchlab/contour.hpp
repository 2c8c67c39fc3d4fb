#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sketchlab/errors.hpp"
#include "sketchlab/landmarks.hpp"
#include "sketchlab/raster.hpp"

namespace sketchlab {

inline constexpr int kMinRenderSize = 64;

/// Draws a 2-px binary stroke from a to b (pixel-center convention).
///
/// With u the major axis, a pixel is set when its center lies in
/// [min_u - 1, max_u + 1) along u and within [line - 1, line + 1) along the
/// minor axis, the line being evaluated at the center clamped to the
/// segment. Every major-axis column therefore carries exactly two pixels.
inline void draw_segment(SketchRaster& s, Point2 a, Point2 b) {
  const bool x_major = std::abs(b.x - a.x) >= std::abs(b.y - a.y);
  const double a_u = x_major ? a.x : a.y;
  const double a_v = x_major ? a.y : a.x;
  const double b_u = x_major ? b.x : b.y;
  const double b_v = x_major ? b.y : b.x;
  const double lo = std::min(a_u, b_u);
  const double hi = std::max(a_u, b_u);
  const double slope = b_u != a_u ? (b_v - a_v) / (b_u - a_u) : 0.0;

  const int u_begin = static_cast<int>(std::ceil(lo - 1.5));
  const int u_end = static_cast<int>(std::ceil(hi + 0.5));  // exclusive
  for (int u = u_begin; u < u_end; ++u) {
    const double t = std::clamp(u + 0.5, lo, hi);
    const double line = a_v + (t - a_u) * slope;
    const int v0 = static_cast<int>(std::ceil(line - 1.5));
    for (int v = v0; v < v0 + 2; ++v) {
      const int x = x_major ? u : v;
      const int y = x_major ? v : u;
      if (s.contains(x, y)) s.set(x, y, 0.0f);
    }
  }
}

inline void draw_polyline(SketchRaster& s, std::span<const Point2> pts, bool closed) {
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) draw_segment(s, pts[i], pts[i + 1]);
  if (closed && pts.size() > 2) draw_segment(s, pts.back(), pts.front());
}

/// Contour sketch of a landmark set: each facial segment joined in order,
/// eyes and lips closed.
inline SketchRaster render_contour(const LandmarkSet& lm, int size) {
  if (size < kMinRenderSize) {
    throw ShapeError("render_contour: size must be >= 64, got " + std::to_string(size));
  }
  lm.validate();
  const auto pts = lm.scaled(size);
  for (const auto& p : pts) {
    if (p.x < 0 || p.y < 0 || p.x >= size || p.y >= size) {
      throw ValidationError("render_contour: landmark outside the frame in " + lm.source_image_id);
    }
  }
  SketchRaster s(size);
  for (const auto& seg : kLandmarkSegments) {
    std::span<const Point2> part(pts.data() + seg.first, seg.last - seg.first + 1);
    draw_polyline(s, part, seg.closed);
  }
  return s;
}

}  // namespace sketchlab
