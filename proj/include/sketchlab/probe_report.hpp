#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sketchlab/image_io.hpp"
#include "sketchlab/pca.hpp"
#include "sketchlab/probe.hpp"
#include "sketchlab/probe_groups.hpp"
#include "sketchlab/scatter.hpp"

namespace sketchlab {

/// Parses "0..4", "0,2,4" or "3" into a layer list.
inline std::vector<int> parse_layer_list(const std::string& text) {
  std::smatch m;
  std::vector<int> out;
  if (std::regex_match(text, m, std::regex(R"(\s*(\d+)\s*\.\.\s*(\d+)\s*)"))) {
    const int a = std::stoi(m[1]), b = std::stoi(m[2]);
    if (a > b) throw ConfigError("layer range " + text + " is empty");
    for (int i = a; i <= b; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!std::regex_match(tok, std::regex(R"(\s*\d+\s*)"))) throw ConfigError("bad layer list: " + text);
    out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw ConfigError("no layers selected");
  return out;
}

/// "auto" or "x,y".
inline std::optional<PixelPoint> parse_probe_point(const std::string& text) {
  if (text == "auto") return std::nullopt;
  std::smatch m;
  if (!std::regex_match(text, m, std::regex(R"(\s*(\d+)\s*,\s*(\d+)\s*)"))) {
    throw ConfigError("point must be 'auto' or 'x,y', got " + text);
  }
  return PixelPoint{std::stoi(m[1]), std::stoi(m[2])};
}

/// Hand-drawn groups: one subdirectory per group named G<k>, holding
/// sketch PNGs.
inline std::vector<ProbeGroup> load_probe_groups_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("probe group directory missing: " + dir.string());
  std::vector<ProbeGroup> groups;
  const std::regex name(R"(G(\d+))");
  for (const auto& sub : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string stem = sub.path().filename().string();
    if (!sub.is_directory() || !std::regex_match(stem, m, name)) continue;
    ProbeGroup g;
    g.group_id = std::stoi(m[1]);
    g.description = stem;
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(sub.path())) {
      if (f.path().extension() == ".png") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) g.sketches.push_back(read_sketch_png(f));
    groups.push_back(std::move(g));
  }
  if (groups.empty()) throw ValidationError("no G<k> group directories under " + dir.string());
  std::sort(groups.begin(), groups.end(),
            [](const ProbeGroup& a, const ProbeGroup& b) { return a.group_id < b.group_id; });
  return groups;
}

/// Collects probe vectors, projects each layer with PCA, writes
/// layer_<i>.svg into `out_dir` plus report.json, and returns the report:
/// {point, layers, entries: [{layer, group, dispersion_2d, dispersion_raw}]}.
inline nlohmann::json run_probe_suite(const Generator<float>& g, const std::vector<ProbeGroup>& groups,
                                      PixelPoint point, const std::vector<int>& layers,
                                      const std::filesystem::path& out_dir, unsigned threads = 0) {
  const auto sets = collect_probe_vectors(g, groups, point, layers, threads);
  std::map<int, Projection2D> projections;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& set : sets) {
    const Projection2D proj = pca_project(set.vectors, 2);
    const auto raw = within_group_dispersion(set.vectors, set.group_ids);
    const auto flat = within_group_dispersion(proj.xy(), set.group_ids);
    for (const auto& [gid, d] : raw) {
      entries.push_back({{"layer", set.layer_index},
                         {"group", "G" + std::to_string(gid)},
                         {"dispersion_2d", flat.at(gid)},
                         {"dispersion_raw", d}});
    }
    projections.emplace(set.layer_index, proj);
  }
  std::filesystem::create_directories(out_dir);
  emit_layer_scatters(projections, sets.front().group_ids, out_dir);
  nlohmann::json report = {{"point", {point.x, point.y}}, {"layers", layers}, {"entries", entries}};
  std::ofstream os(out_dir / "report.json");
  os << report.dump(2) << '\n';
  if (!os) throw IoError("cannot write " + (out_dir / "report.json").string());
  return report;
}

}  // namespace sketchlab
