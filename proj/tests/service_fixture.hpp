#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "sketchlab/service.hpp"

namespace sketchlab::testing {

/// Writes random-init "baseline" (prefix 0) and "ours" (prefix 2)
/// checkpoints plus a registry file next to them. Returns the registry path.
inline std::filesystem::path write_test_registry(const std::filesystem::path& dir, int size,
                                                 int base_channels, int n_resblocks = 1,
                                                 std::size_t queue_depth = kDefaultQueueDepth) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& [name, prefix] : {std::pair{"baseline", 0}, std::pair{"ours", 2}}) {
    GeneratorSpec spec;
    spec.base_channels = base_channels;
    spec.n_resblocks = n_resblocks;
    spec.norm_free_prefix = prefix;
    Generator<float> g(spec, 11);
    CheckpointMeta meta;
    meta.image_size = size;
    save_checkpoint(dir / (std::string(name) + ".sklb"), g, nullptr, meta);
    models.push_back({{"model_id", name}, {"checkpoint", std::string(name) + ".sklb"}});
  }
  const auto path = dir / "registry.json";
  std::ofstream(path) << nlohmann::json{{"queue_depth", queue_depth}, {"models", models}}.dump(2);
  return path;
}

inline std::string sketch_b64(const SketchRaster& s) {
  return base64_encode(png_from_gray(s.pixels()));
}

}  // namespace sketchlab::testing
