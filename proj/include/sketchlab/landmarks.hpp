#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sketchlab/errors.hpp"

namespace sketchlab {

inline constexpr int kLandmarkCount = 68;

struct Point2 {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// 68 facial landmarks in the pixel frame of their source photo.
struct LandmarkSet {
  std::vector<Point2> points;
  std::string source_image_id;
  /// Side length of the (square) photo frame the points refer to.
  double frame_size = 512;

  void validate() const {
    if (points.size() != static_cast<std::size_t>(kLandmarkCount)) {
      throw ValidationError("landmark set " + source_image_id + ": expected 68 points, got " +
                            std::to_string(points.size()));
    }
    if (!(frame_size > 0)) throw ValidationError("landmark set: frame size must be positive");
    for (const auto& p : points) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw ValidationError("landmark set " + source_image_id + ": non-finite coordinate");
      }
    }
  }

  /// Points rescaled to a square raster of side `size`.
  std::vector<Point2> scaled(int size) const {
    const double k = size / frame_size;
    std::vector<Point2> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back({p.x * k, p.y * k});
    return out;
  }

  LandmarkSet translated(double dx, double dy) const {
    LandmarkSet out = *this;
    for (auto& p : out.points) {
      p.x += dx;
      p.y += dy;
    }
    return out;
  }
};

/// A facial segment of the 68-point scheme: [first, last] joined in order.
struct LandmarkSegment {
  int first;
  int last;
  bool closed;
};

inline constexpr std::array<LandmarkSegment, 9> kLandmarkSegments = {{
    {0, 16, false},   // jaw
    {17, 21, false},  // brows
    {22, 26, false},
    {27, 30, false},  // nose bridge
    {31, 35, false},  // nose base
    {36, 41, true},   // eyes
    {42, 47, true},
    {48, 59, true},   // lips
    {60, 67, true},
}};

inline constexpr int kLeftEyeOuterCorner = 36;

inline nlohmann::json landmarks_to_json(const LandmarkSet& lm) {
  auto arr = nlohmann::json::array();
  for (const auto& p : lm.points) arr.push_back({p.x, p.y});
  return arr;
}

/// Parses a JSON array of 68 [x, y] pairs.
inline LandmarkSet landmarks_from_json(const nlohmann::json& j, std::string id, double frame_size) {
  if (!j.is_array()) throw ValidationError("landmarks " + id + ": expected a JSON array");
  LandmarkSet lm;
  lm.source_image_id = std::move(id);
  lm.frame_size = frame_size;
  for (const auto& pt : j) {
    if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
      throw ValidationError("landmarks " + lm.source_image_id + ": malformed point");
    }
    lm.points.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  lm.validate();
  return lm;
}

/// Whitespace-separated text with 136 numbers (x0 y0 x1 y1 ...).
inline LandmarkSet landmarks_from_text(const std::string& text, std::string id, double frame_size) {
  std::istringstream is(text);
  std::vector<double> v;
  double d;
  while (is >> d) v.push_back(d);
  if (!is.eof()) throw ValidationError("landmarks " + id + ": non-numeric token");
  if (v.size() != 2 * kLandmarkCount) {
    throw ValidationError("landmarks " + id + ": expected 136 numbers, got " +
                          std::to_string(v.size()));
  }
  LandmarkSet lm;
  lm.source_image_id = std::move(id);
  lm.frame_size = frame_size;
  for (int i = 0; i < kLandmarkCount; ++i) lm.points.push_back({v[2 * i], v[2 * i + 1]});
  lm.validate();
  return lm;
}

/// Reads either format; JSON when the first non-blank character is '['.
inline LandmarkSet read_landmarks(const std::filesystem::path& path, double frame_size) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read landmark file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  const std::string id = path.stem().string();
  if (first != std::string::npos && text[first] == '[') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("landmarks " + id + ": " + e.what());
    }
    return landmarks_from_json(j, id, frame_size);
  }
  return landmarks_from_text(text, id, frame_size);
}

inline void write_landmarks(const std::filesystem::path& path, const LandmarkSet& lm) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << landmarks_to_json(lm).dump() << "\n";
}

/// Shape parameters of the template face, in units of the frame side.
/// The image-left eye is landmarks 36-41; the right half mirrors it.
struct FaceShape {
  double center_x = 0.5;
  double jaw_cy = 0.45;
  double jaw_rx = 0.28;
  double jaw_ry = 0.42;
  double jaw_taper = 0.0;  // narrows the lower jaw

  double brow_y = 0.33;
  double brow_arch = 0.025;
  double brow_tilt = 0.0;
  double brow_outer = 0.27;
  double brow_inner = 0.45;

  double eye_y = 0.43;
  double eye_outer = 0.30;
  double eye_width = 0.13;
  double eye_open = 0.035;
  double eye_lower = 0.8;  // lower lid relative to upper
  double eye_tilt = 0.0;   // radians

  double nose_top = 0.43;
  double nose_tip = 0.58;
  double nose_half_width = 0.06;
  double nose_base_y = 0.615;
  double nostril_drop = 0.015;

  double mouth_y = 0.71;
  double mouth_half_width = 0.10;
  double lip_upper = 0.035;
  double lip_lower = 0.045;
  double mouth_open = 0.01;
};

/// 68-point template in the iBUG ordering, scaled to `frame_size` pixels.
inline LandmarkSet face_template(const FaceShape& f, double frame_size = 512,
                                 std::string id = "template") {
  const double pi = std::numbers::pi;
  std::vector<Point2> u(kLandmarkCount);
  const double cx = f.center_x;

  for (int i = 0; i <= 16; ++i) {
    const double th = pi - i * pi / 16;
    const double s = std::sin(th);
    u[i] = {cx + f.jaw_rx * std::cos(th) * (1 - f.jaw_taper * s), f.jaw_cy + f.jaw_ry * s};
  }
  for (int i = 0; i < 5; ++i) {
    const double t = i / 4.0;
    const double x = f.brow_outer + (f.brow_inner - f.brow_outer) * t;
    const double y = f.brow_y - f.brow_arch * std::sin(pi * t) + f.brow_tilt * (t - 0.5);
    u[17 + i] = {x, y};
    u[26 - i] = {2 * cx - x, y};
  }
  for (int i = 0; i < 4; ++i) u[27 + i] = {cx, f.nose_top + (f.nose_tip - f.nose_top) * i / 3.0};
  const double nostril[5] = {-f.nostril_drop, 0, 0.5 * f.nostril_drop, 0, -f.nostril_drop};
  for (int i = 0; i < 5; ++i) {
    u[31 + i] = {cx + f.nose_half_width * (i - 2) / 2.0, f.nose_base_y + nostril[i]};
  }

  // Eye outline relative to its outer corner, then tilted about the eye center.
  const double w = f.eye_width;
  const std::array<Point2, 6> eye = {{{0, 0},
                                      {w / 3, -f.eye_open},
                                      {2 * w / 3, -f.eye_open},
                                      {w, 0},
                                      {2 * w / 3, f.eye_open * f.eye_lower},
                                      {w / 3, f.eye_open * f.eye_lower}}};
  const double ct = std::cos(f.eye_tilt);
  const double st = std::sin(f.eye_tilt);
  for (int i = 0; i < 6; ++i) {
    const double rx = eye[i].x - w / 2;
    const double ry = eye[i].y;
    const Point2 p{f.eye_outer + w / 2 + rx * ct - ry * st, f.eye_y + rx * st + ry * ct};
    u[36 + i] = p;
  }
  // Right eye: 42 inner corner, 43-44 upper lid, 45 outer corner, 46-47 lower lid.
  const int mirror[6] = {39, 38, 37, 36, 41, 40};
  for (int i = 0; i < 6; ++i) u[42 + i] = {2 * cx - u[mirror[i]].x, u[mirror[i]].y};

  for (int i = 0; i < 12; ++i) {
    const double phi = pi - i * pi / 6;
    const double h = std::sin(phi) >= 0 ? f.lip_upper : f.lip_lower;
    u[48 + i] = {cx + f.mouth_half_width * std::cos(phi), f.mouth_y - h * std::sin(phi)};
  }
  for (int i = 0; i < 8; ++i) {
    const double phi = pi - i * pi / 4;
    u[60 + i] = {cx + 0.7 * f.mouth_half_width * std::cos(phi),
                 f.mouth_y - f.mouth_open * std::sin(phi)};
  }

  LandmarkSet lm;
  lm.source_image_id = std::move(id);
  lm.frame_size = frame_size;
  for (const auto& p : u) lm.points.push_back({p.x * frame_size, p.y * frame_size});
  return lm;
}

}  // namespace sketchlab
