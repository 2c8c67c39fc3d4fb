#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sketchlab/contour.hpp"
#include "sketchlab/errors.hpp"
#include "sketchlab/hash.hpp"
#include "sketchlab/image_io.hpp"
#include "sketchlab/landmarks.hpp"

namespace sketchlab {

namespace fs = std::filesystem;

/// Pixel-wise mean of equally sized sketches, values in [0,1].
inline Tensor<float> average_face(std::span<const SketchRaster> sketches) {
  if (sketches.empty()) throw ValidationError("average_face: empty collection");
  const int n = sketches.front().size();
  std::vector<double> acc(static_cast<std::size_t>(n) * n, 0.0);
  for (const auto& s : sketches) {
    if (s.size() != n) throw ShapeError("average_face: sketches differ in size");
    const auto v = s.pixels().values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  Tensor<float> out(1, n, n);
  const double k = static_cast<double>(sketches.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.data()[i] = static_cast<float>(std::clamp(acc[i] / k, 0.0, 1.0));
  }
  return out;
}

/// Average face thresholded back to a binary contour.
inline SketchRaster binarize(const Tensor<float>& gray, float threshold = 0.5f) {
  Tensor<float> t(gray.shape());
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = gray.data()[i] < threshold ? 0.0f : 1.0f;
  return SketchRaster(std::move(t));
}

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

struct ManifestEntry {
  std::string id;
  std::string sketch_path;
  std::string photo_path;
  std::string landmark_path;
  Split split = Split::train;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                  [s](const auto& e) { return e.split == s; }));
  }

  std::vector<ManifestEntry> select(Split s) const {
    std::vector<ManifestEntry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
                 [s](const auto& e) { return e.split == s; });
    return out;
  }

  /// Every referenced file exists and no id is listed twice.
  void validate() const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
      if (!seen.insert(e.id).second) throw ValidationError("manifest: duplicate id " + e.id);
      for (const auto* p : {&e.sketch_path, &e.photo_path, &e.landmark_path}) {
        if (!fs::exists(*p)) throw ValidationError("manifest: missing file " + *p);
      }
    }
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"id", e.id},
                       {"sketch_path", e.sketch_path},
                       {"photo_path", e.photo_path},
                       {"landmark_path", e.landmark_path},
                       {"split", to_string(e.split)}});
  }
  return {{"entries", entries},
          {"counts", {{"train", m.count(Split::train)}, {"test", m.count(Split::test)}}}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("id").get<std::string>(), e.at("sketch_path").get<std::string>(),
                           e.at("photo_path").get<std::string>(),
                           e.at("landmark_path").get<std::string>(),
                           parse_split(e.at("split").get<std::string>())});
    }
    if (j.contains("counts")) {
      const auto& c = j.at("counts");
      if (c.at("train").get<std::size_t>() != m.count(Split::train) ||
          c.at("test").get<std::size_t>() != m.count(Split::test)) {
        throw ValidationError("manifest: counts disagree with entries");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << manifest_to_json(m).dump(2) << "\n";
}

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

inline std::string manifest_hash(const DatasetManifest& m) {
  return fnv1a_hex(manifest_to_json(m).dump());
}

struct ManifestRequest {
  fs::path photo_dir;
  fs::path landmark_dir;
  fs::path sketch_dir;       // rendered contours are written here
  double split_ratio = 0.75;  // fraction assigned to train
  std::uint64_t seed = 0;
  /// Fixed split sizes override the ratio when both are set.
  std::optional<std::size_t> train_count;
  std::optional<std::size_t> test_count;
  int render_size = 0;  // 0: photo width
  unsigned threads = 0; // 0: hardware concurrency
};

namespace detail {

inline std::optional<fs::path> find_landmark_file(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".json", ".txt", ".pts"}) {
    const auto p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

struct IngestResult {
  std::optional<ManifestEntry> entry;
  std::string warning;
};

inline IngestResult ingest_one(const fs::path& photo, const ManifestRequest& req) {
  const std::string id = photo.stem().string();
  const auto lm_path = find_landmark_file(req.landmark_dir, id);
  if (!lm_path) return {std::nullopt, "no landmark file for " + id};
  try {
    const auto [w, h] = png_dimensions(photo);
    if (w != h) return {std::nullopt, "non-square photo " + id};
    const LandmarkSet lm = read_landmarks(*lm_path, w);
    const int size = req.render_size > 0 ? req.render_size : w;
    const fs::path sketch = req.sketch_dir / (id + ".png");
    write_sketch_png(sketch, render_contour(lm, size));
    return {ManifestEntry{id, sketch.string(), photo.string(), lm_path->string(), Split::train}, {}};
  } catch (const ValidationError& e) {
    return {std::nullopt, "skipping " + id + ": " + e.what()};
  }
}

}  // namespace detail

/// Scans photos, renders a contour for every photo with a valid landmark
/// file and assigns a seeded shuffled split. Invalid landmark files are
/// skipped with a warning.
inline DatasetManifest build_manifest(const ManifestRequest& req,
                                      std::vector<std::string>* warnings = nullptr) {
  for (const auto* d : {&req.photo_dir, &req.landmark_dir}) {
    if (!fs::is_directory(*d)) throw IoError("not a directory: " + d->string());
  }
  if (!(req.split_ratio >= 0 && req.split_ratio <= 1)) {
    throw ConfigError("split ratio must lie in [0,1]");
  }
  fs::create_directories(req.sketch_dir);

  std::vector<fs::path> photos;
  for (const auto& e : fs::directory_iterator(req.photo_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") photos.push_back(e.path());
  }
  std::sort(photos.begin(), photos.end());

  std::vector<detail::IngestResult> results(photos.size());
  unsigned n_threads = req.threads ? req.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, std::max<std::size_t>(photos.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < photos.size(); i += n_threads) {
          results[i] = detail::ingest_one(photos[i], req);
        }
      });
    }
  }

  DatasetManifest m;
  for (auto& r : results) {
    if (r.entry) {
      m.entries.push_back(std::move(*r.entry));
    } else {
      std::clog << "warning: " << r.warning << "\n";
      if (warnings) warnings->push_back(r.warning);
    }
  }

  std::vector<std::size_t> order(m.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(req.seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }

  std::size_t n_train = static_cast<std::size_t>(std::llround(order.size() * req.split_ratio));
  std::size_t n_test = order.size() - n_train;
  if (req.train_count && req.test_count) {
    if (*req.train_count + *req.test_count > order.size()) {
      throw ConfigError("fixed split sizes exceed the " + std::to_string(order.size()) +
                        " valid entries");
    }
    n_train = *req.train_count;
    n_test = *req.test_count;
  }
  std::vector<ManifestEntry> kept;
  for (std::size_t k = 0; k < n_train + n_test; ++k) {
    ManifestEntry e = m.entries[order[k]];
    e.split = k < n_train ? Split::train : Split::test;
    kept.push_back(std::move(e));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  m.entries = std::move(kept);
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic pairs: template faces with random shape, painted as flat photos.

/// Template face with every shape parameter jittered by up to `spread`
/// of its natural range.
inline FaceShape random_face_shape(std::mt19937_64& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto j = [&](double v, double range) { return v + spread * range * u(rng); };
  FaceShape f;
  f.center_x = j(f.center_x, 0.02);
  f.jaw_cy = j(f.jaw_cy, 0.015);
  f.jaw_rx = j(f.jaw_rx, 0.025);
  f.jaw_ry = j(f.jaw_ry, 0.03);
  f.jaw_taper = j(0.1, 0.1);
  f.brow_y = j(f.brow_y, 0.015);
  f.brow_arch = j(f.brow_arch, 0.012);
  f.brow_tilt = j(f.brow_tilt, 0.02);
  f.eye_y = j(f.eye_y, 0.01);
  f.eye_width = j(f.eye_width, 0.015);
  f.eye_open = j(f.eye_open, 0.01);
  f.eye_tilt = j(f.eye_tilt, 0.08);
  f.nose_tip = j(f.nose_tip, 0.02);
  f.nose_half_width = j(f.nose_half_width, 0.012);
  f.nose_base_y = f.nose_tip + 0.035;
  f.mouth_y = j(f.mouth_y, 0.02);
  f.mouth_half_width = j(f.mouth_half_width, 0.02);
  f.lip_upper = j(f.lip_upper, 0.01);
  f.lip_lower = j(f.lip_lower, 0.01);
  f.mouth_open = std::max(0.0, j(f.mouth_open, 0.01));
  return f;
}

namespace detail {

using Rgb = std::array<double, 3>;

class Canvas {
 public:
  explicit Canvas(int n) : n_(n), px_(static_cast<std::size_t>(n) * n) {}

  int size() const { return n_; }
  Rgb& at(int x, int y) { return px_[static_cast<std::size_t>(y) * n_ + x]; }

  void blend(int x, int y, const Rgb& c, double alpha) {
    if (x < 0 || y < 0 || x >= n_ || y >= n_) return;
    Rgb& p = at(x, y);
    for (int k = 0; k < 3; ++k) p[k] = p[k] * (1 - alpha) + c[k] * alpha;
  }

  void fill_polygon(std::span<const Point2> poly, const Rgb& c, double alpha = 1.0) {
    double x0 = n_, y0 = n_, x1 = 0, y1 = 0;
    for (const auto& p : poly) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    for (int y = std::max(0, static_cast<int>(y0)); y <= std::min(n_ - 1, static_cast<int>(y1)); ++y) {
      for (int x = std::max(0, static_cast<int>(x0)); x <= std::min(n_ - 1, static_cast<int>(x1)); ++x) {
        if (inside(poly, x + 0.5, y + 0.5)) blend(x, y, c, alpha);
      }
    }
  }

  void fill_ellipse(Point2 c, double rx, double ry, const Rgb& col, double alpha = 1.0) {
    for (int y = std::max(0, static_cast<int>(c.y - ry)); y <= std::min(n_ - 1, static_cast<int>(c.y + ry)); ++y) {
      for (int x = std::max(0, static_cast<int>(c.x - rx)); x <= std::min(n_ - 1, static_cast<int>(c.x + rx)); ++x) {
        const double dx = (x + 0.5 - c.x) / rx;
        const double dy = (y + 0.5 - c.y) / ry;
        if (dx * dx + dy * dy <= 1) blend(x, y, col, alpha);
      }
    }
  }

  void thick_line(Point2 a, Point2 b, double radius, const Rgb& col, double alpha = 1.0) {
    const int xa = static_cast<int>(std::min(a.x, b.x) - radius);
    const int xb = static_cast<int>(std::max(a.x, b.x) + radius);
    const int ya = static_cast<int>(std::min(a.y, b.y) - radius);
    const int yb = static_cast<int>(std::max(a.y, b.y) + radius);
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len2 = std::max(vx * vx + vy * vy, 1e-12);
    for (int y = ya; y <= yb; ++y) {
      for (int x = xa; x <= xb; ++x) {
        const double px = x + 0.5 - a.x;
        const double py = y + 0.5 - a.y;
        const double t = std::clamp((px * vx + py * vy) / len2, 0.0, 1.0);
        const double dx = px - t * vx;
        const double dy = py - t * vy;
        if (dx * dx + dy * dy <= radius * radius) blend(x, y, col, alpha);
      }
    }
  }

  FacePhoto to_photo() const {
    Tensor<float> t(3, n_, n_);
    for (int y = 0; y < n_; ++y) {
      for (int x = 0; x < n_; ++x) {
        const Rgb& p = px_[static_cast<std::size_t>(y) * n_ + x];
        for (int k = 0; k < 3; ++k) {
          // Quantize so the tensor equals its own PNG round trip.
          const auto byte = static_cast<float>(std::round(std::clamp(p[k], 0.0, 1.0) * 255.0));
          t(k, y, x) = byte / 127.5f - 1.0f;
        }
      }
    }
    return FacePhoto(std::move(t));
  }

 private:
  static bool inside(std::span<const Point2> poly, double x, double y) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      if ((poly[i].y > y) != (poly[j].y > y) &&
          x < (poly[j].x - poly[i].x) * (y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x) {
        in = !in;
      }
    }
    return in;
  }

  int n_;
  std::vector<Rgb> px_;
};

}  // namespace detail

/// Flat-shaded face painted from landmarks. Colors are drawn from `rng`.
inline FacePhoto synthesize_photo(const LandmarkSet& lm, int size, std::mt19937_64& rng) {
  lm.validate();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto p = lm.scaled(size);
  const double n = size;
  const detail::Rgb bg{0.3 + 0.6 * u(rng), 0.3 + 0.6 * u(rng), 0.3 + 0.6 * u(rng)};
  const double tone = u(rng);
  const detail::Rgb skin{0.55 + 0.4 * tone, 0.40 + 0.35 * tone, 0.30 + 0.32 * tone};
  const double hair_l = 0.05 + 0.45 * u(rng);
  const detail::Rgb hair{hair_l * 1.2, hair_l * 0.9, hair_l * 0.6};
  const detail::Rgb lip{0.65 + 0.2 * u(rng), 0.25 + 0.1 * u(rng), 0.3 + 0.1 * u(rng)};
  const detail::Rgb iris{0.1 + 0.3 * u(rng), 0.1 + 0.25 * u(rng), 0.05 + 0.2 * u(rng)};

  detail::Canvas c(size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double g = 0.85 + 0.15 * y / n;
      c.at(x, y) = {bg[0] * g, bg[1] * g, bg[2] * g};
    }
  }

  const Point2 left = p[0];
  const Point2 right = p[16];
  const Point2 top_center{(left.x + right.x) / 2, (left.y + right.y) / 2};
  const double rx = (right.x - left.x) / 2;
  const double brow_top = std::min(p[19].y, p[24].y);
  const double ry = top_center.y - (brow_top - 0.12 * n);
  c.fill_ellipse({top_center.x, top_center.y - 0.02 * n}, rx * 1.12, ry * 1.2, hair);

  std::vector<Point2> face(p.begin(), p.begin() + 17);
  for (int i = 1; i < 24; ++i) {
    const double th = -std::numbers::pi * i / 24;
    face.push_back({top_center.x + rx * std::cos(th), top_center.y + ry * std::sin(th)});
  }
  c.fill_polygon(face, skin);
  // Cheek shading toward the jaw line.
  for (int k = 0; k < 17; ++k) c.thick_line(p[k], p[std::min(k + 1, 16)], 0.02 * n, {0, 0, 0}, 0.08);

  for (int e : {36, 42}) {
    std::span<const Point2> eye(p.data() + e, 6);
    c.fill_polygon(eye, {0.95, 0.95, 0.93});
    const Point2 mid{(p[e].x + p[e + 3].x) / 2, (p[e + 1].y + p[e + 2].y + p[e + 4].y + p[e + 5].y) / 4};
    const double r = std::max(1.0, 0.3 * std::abs(p[e + 3].x - p[e].x));
    c.fill_ellipse(mid, r * 0.8, r * 0.8, iris);
    for (int k = 0; k < 6; ++k) c.thick_line(p[e + k], p[e + (k + 1) % 6], 0.004 * n, {0.1, 0.08, 0.08});
  }
  for (int b : {17, 22}) {
    for (int k = 0; k < 4; ++k) c.thick_line(p[b + k], p[b + k + 1], 0.009 * n, hair, 0.9);
  }
  for (int k = 27; k < 30; ++k) c.thick_line(p[k], p[k + 1], 0.006 * n, {0, 0, 0}, 0.12);
  for (int k = 31; k < 35; ++k) c.thick_line(p[k], p[k + 1], 0.006 * n, {0.2, 0.1, 0.1}, 0.4);

  std::span<const Point2> outer(p.data() + 48, 12);
  std::span<const Point2> inner(p.data() + 60, 8);
  c.fill_polygon(outer, lip);
  c.fill_polygon(inner, {0.3, 0.1, 0.1});
  return c.to_photo();
}

struct SyntheticPairs {
  fs::path photo_dir;
  fs::path landmark_dir;
};

/// Writes `count` synthetic photos and landmark files named pair_NNNN.
inline SyntheticPairs write_synthetic_pairs(const fs::path& out, int count, int size,
                                            std::uint64_t seed) {
  if (count < 1) throw ConfigError("synthetic pair count must be >= 1");
  if (size < kMinRenderSize) throw ConfigError("synthetic pair size must be >= 64");
  SyntheticPairs dirs{out / "photos", out / "landmarks"};
  fs::create_directories(dirs.photo_dir);
  fs::create_directories(dirs.landmark_dir);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "pair_%04d", i);
    const LandmarkSet lm = face_template(random_face_shape(rng), size, name);
    write_landmarks(dirs.landmark_dir / (std::string(name) + ".json"), lm);
    write_photo_png(dirs.photo_dir / (std::string(name) + ".png"), synthesize_photo(lm, size, rng));
  }
  return dirs;
}

}  // namespace sketchlab
