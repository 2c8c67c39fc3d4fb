#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "sketchlab/errors.hpp"
#include "sketchlab/generator.hpp"

namespace sketchlab {

struct ReceptiveField {
  int size = 0;
  int stride = 0;
  friend bool operator==(const ReceptiveField&, const ReceptiveField&) = default;
};

/// Receptive field of encoder layer L_i from the kernel/stride chain:
/// a 7x7 stride-1 stem followed by 3x3 stride-2 downsampling convs.
inline ReceptiveField receptive_field(int layer_index, int n_downsample = 4) {
  if (layer_index < 0 || layer_index > n_downsample) {
    throw RangeError("receptive_field: layer " + std::to_string(layer_index) + " outside 0.." +
                     std::to_string(n_downsample));
  }
  ReceptiveField rf{7, 1};
  for (int i = 1; i <= layer_index; ++i) {
    rf.size += (3 - 1) * rf.stride;
    rf.stride *= 2;
  }
  return rf;
}

/// Inclusive pixel window [x0, x1] x [y0, y1].
struct PixelWindow {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool inside_image(int size) const { return x0 >= 0 && y0 >= 0 && x1 < size && y1 < size; }
  friend bool operator==(const PixelWindow&, const PixelWindow&) = default;
};

/// Input pixels that influence the L_i feature cell covering `p`.
inline PixelWindow receptive_window(int layer_index, PixelPoint p, int n_downsample = 4) {
  const ReceptiveField rf = receptive_field(layer_index, n_downsample);
  const int half = (rf.size - 1) / 2;
  const int cx = (p.x / rf.stride) * rf.stride;
  const int cy = (p.y / rf.stride) * rf.stride;
  return {cx - half, cy - half, cx + half, cy + half};
}

/// Square window of side 2 * half + 1 centered on `p`.
inline PixelWindow centered_window(PixelPoint p, int half) {
  return {p.x - half, p.y - half, p.x + half, p.y + half};
}

/// True when the deepest encoder receptive window at `p` lies inside the
/// image, so no padded pixel reaches any probe vector.
inline bool is_interior(PixelPoint p, int image_size, int n_downsample = 4) {
  return receptive_window(n_downsample, p, n_downsample).inside_image(image_size);
}

inline void require_interior(PixelPoint p, int image_size, int n_downsample = 4) {
  if (!is_interior(p, image_size, n_downsample)) {
    const auto w = receptive_window(n_downsample, p, n_downsample);
    throw RangeError("probe point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                     ") too close to the border: its " + std::to_string(w.width()) +
                     "px receptive window leaves the " + std::to_string(image_size) + "px image");
  }
}

struct ProbeGroup {
  int group_id = 0;
  std::string description;
  std::vector<SketchRaster> sketches;
  bool eye_invariant = false;
};

/// Probe vectors of one layer, ordered by (group, sketch).
struct ProbeVectorSet {
  int layer_index = 0;
  PixelPoint point;
  std::vector<ProbeVector> vectors;
  std::vector<int> group_ids;  // parallel to vectors
};

/// Encoder probe vectors at `point` for every sketch of every group.
/// Sketches are processed in parallel; results are merged in input order.
inline std::vector<ProbeVectorSet> collect_probe_vectors(const Generator<float>& g,
                                                         const std::vector<ProbeGroup>& groups,
                                                         PixelPoint point,
                                                         const std::vector<int>& layers,
                                                         unsigned threads = 0) {
  if (layers.empty()) throw ConfigError("collect_probe_vectors: no layers requested");
  const int n_down = g.spec().n_downsample;
  for (int l : layers) {
    if (l < 0 || l > n_down) throw RangeError("collect_probe_vectors: layer " + std::to_string(l));
  }
  std::vector<std::pair<int, const SketchRaster*>> jobs;
  for (const auto& grp : groups) {
    if (grp.sketches.size() < 2) throw ValidationError("probe group needs >= 2 sketches");
    for (const auto& s : grp.sketches) {
      if (s.size() != groups.front().sketches.front().size()) {
        throw ShapeError("probe groups must share one resolution");
      }
      jobs.emplace_back(grp.group_id, &s);
    }
  }
  if (jobs.empty()) throw ValidationError("collect_probe_vectors: no sketches");
  require_interior(point, jobs.front().second->size(), n_down);

  const int deepest = *std::max_element(layers.begin(), layers.end());
  // per job, per requested layer
  std::vector<std::vector<ProbeVector>> results(jobs.size());
  unsigned n_threads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(jobs.size()));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < jobs.size(); i += n_threads) {
          const auto maps = extract_feature_stack(g, *jobs[i].second, deepest);
          for (int l : layers) results[i].push_back(probe_vector(maps[l], point));
        }
      });
    }
  }

  std::vector<ProbeVectorSet> out;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    ProbeVectorSet set{layers[k], point, {}, {}};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      set.vectors.push_back(results[i][k]);
      set.group_ids.push_back(jobs[i].first);
    }
    out.push_back(std::move(set));
  }
  return out;
}

/// Mean Euclidean distance of each point to its centroid. The centroid is
/// accumulated as offsets from the first point so identical points give 0.
template <typename Vec>
double dispersion(const std::vector<Vec>& points) {
  if (points.empty()) throw ValidationError("dispersion: empty group");
  const std::size_t dim = points.front().size();
  std::vector<double> centroid(dim, 0.0);
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("dispersion: mixed dimensions");
    for (std::size_t d = 0; d < dim; ++d) centroid[d] += static_cast<double>(p[d]) - points.front()[d];
  }
  for (std::size_t d = 0; d < dim; ++d) {
    centroid[d] = points.front()[d] + centroid[d] / static_cast<double>(points.size());
  }
  double total = 0;
  for (const auto& p : points) {
    double s = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = p[d] - centroid[d];
      s += diff * diff;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(points.size());
}

/// Dispersion per group id of points labelled by `group_ids`.
template <typename Vec>
std::map<int, double> within_group_dispersion(const std::vector<Vec>& points,
                                              const std::vector<int>& group_ids) {
  if (points.size() != group_ids.size()) throw ShapeError("within_group_dispersion: label count");
  std::map<int, std::vector<Vec>> by_group;
  for (std::size_t i = 0; i < points.size(); ++i) by_group[group_ids[i]].push_back(points[i]);
  std::map<int, double> out;
  for (const auto& [id, pts] : by_group) out[id] = dispersion(pts);
  return out;
}

}  // namespace sketchlab
