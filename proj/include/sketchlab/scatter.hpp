#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sketchlab/errors.hpp"
#include "sketchlab/pca.hpp"

namespace sketchlab {

/// Group colors for G1..G11.
inline const std::map<int, std::string>& group_palette() {
  static const std::map<int, std::string> palette = {
      {1, "#e6194b"},  {2, "#f58231"}, {3, "#bfef45"}, {4, "#4363d8"},
      {5, "#9a6324"},  {6, "#f032e6"}, {7, "#a9a9a9"}, {8, "#808000"},
      {9, "#3cb44b"},  {10, "#911eb4"}, {11, "#469990"},
  };
  return palette;
}

inline std::string group_color(int group_id) {
  const auto& p = group_palette();
  const auto it = p.find(group_id);
  return it != p.end() ? it->second : "#000000";
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

/// SVG scatter of the first two projected coordinates. Each point is one
/// `marker` text element carrying its group number.
inline std::string render_scatter_svg(const Projection2D& proj, const std::vector<int>& group_ids,
                                      const std::string& title) {
  const auto pts = proj.xy();
  if (pts.size() != group_ids.size()) {
    throw ShapeError("emit_scatter: " + std::to_string(group_ids.size()) + " labels for " +
                     std::to_string(pts.size()) + " points");
  }
  constexpr double kPlot = 480, kMargin = 40, kLegend = 110;
  double range = 0;
  for (const auto& p : pts) range = std::max({range, std::abs(p[0]), std::abs(p[1])});
  if (range == 0) range = 1;
  const double scale = (kPlot / 2 - 10) / range;
  const double cx = kMargin + kPlot / 2;
  const double cy = kMargin + kPlot / 2;

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(kPlot + 2 * kMargin + kLegend) +
       "\" height=\"" + detail::fmt(kPlot + 2 * kMargin) + "\" font-family=\"sans-serif\">\n";
  s += "<title>" + title + "</title>\n";
  s += "<rect x=\"" + detail::fmt(kMargin) + "\" y=\"" + detail::fmt(kMargin) + "\" width=\"" +
       detail::fmt(kPlot) + "\" height=\"" + detail::fmt(kPlot) +
       "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
  s += "<text x=\"" + detail::fmt(kMargin) + "\" y=\"24\" font-size=\"14\">" + title + "</text>\n";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = cx + pts[i][0] * scale;
    const double y = cy - pts[i][1] * scale;
    s += "<text class=\"marker\" x=\"" + detail::fmt(x) + "\" y=\"" + detail::fmt(y) +
         "\" font-size=\"10\" text-anchor=\"middle\" fill=\"" + group_color(group_ids[i]) + "\">" +
         std::to_string(group_ids[i]) + "</text>\n";
  }
  const std::set<int> present(group_ids.begin(), group_ids.end());
  double ly = kMargin + 10;
  for (int g : present) {
    const double lx = kMargin + kPlot + 16;
    s += "<g class=\"legend-entry\"><rect x=\"" + detail::fmt(lx) + "\" y=\"" + detail::fmt(ly - 9) +
         "\" width=\"10\" height=\"10\" fill=\"" + group_color(g) + "\"/><text x=\"" +
         detail::fmt(lx + 16) + "\" y=\"" + detail::fmt(ly) + "\" font-size=\"12\">G" +
         std::to_string(g) + "</text></g>\n";
    ly += 18;
  }
  s += "</svg>\n";
  return s;
}

inline void emit_scatter(const Projection2D& proj, const std::vector<int>& group_ids,
                         const std::filesystem::path& path, const std::string& title) {
  const std::string svg = render_scatter_svg(proj, group_ids, title);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << svg;
  if (!os) throw IoError("failed writing " + path.string());
}

/// One SVG per layer, named layer_<i>.svg under `dir`.
inline std::vector<std::filesystem::path> emit_layer_scatters(
    const std::map<int, Projection2D>& by_layer, const std::vector<int>& group_ids,
    const std::filesystem::path& dir) {
  if (by_layer.empty()) throw ConfigError("emit_layer_scatters: no layers selected");
  std::vector<std::filesystem::path> written;
  for (const auto& [layer, proj] : by_layer) {
    const auto path = dir / ("layer_" + std::to_string(layer) + ".svg");
    emit_scatter(proj, group_ids, path, "L" + std::to_string(layer) + " probe vectors (PCA)");
    written.push_back(path);
  }
  return written;
}

}  // namespace sketchlab
