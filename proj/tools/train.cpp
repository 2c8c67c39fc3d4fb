// train: adversarial training over a manifest.
#include <iostream>

#include "sketchlab/train.hpp"
#include "tool_main.hpp"

using namespace sketchlab;

int main(int argc, char** argv) {
  CLI::App app{"Train a sketch-to-face generator", "train"};
  fs::path config, manifest_path, out = "runs/latest";
  int synthetic = 0;
  std::uint64_t data_seed = 5;
  app.add_option("--config", config, "Flat key = value config file")->required();
  auto* man = app.add_option("--manifest", manifest_path, "Dataset manifest JSON");
  auto* syn = app.add_option("--synthetic", synthetic,
                             "Generate this many synthetic pairs under <out>/data instead");
  man->excludes(syn);
  app.add_option("--data-seed", data_seed, "Seed for --synthetic data")->capture_default_str();
  app.add_option("--out", out, "Run directory")->capture_default_str();

  return tools::guarded_main(app, argc, argv, [&] {
    const TrainConfig cfg = load_train_config(config);
    DatasetManifest manifest;
    if (!manifest_path.empty()) {
      manifest = load_manifest(manifest_path);
    } else if (synthetic > 0) {
      const auto dirs = write_synthetic_pairs(out / "data", synthetic, cfg.image_size, data_seed);
      ManifestRequest req;
      req.photo_dir = dirs.photo_dir;
      req.landmark_dir = dirs.landmark_dir;
      req.sketch_dir = out / "data" / "sketches";
      req.split_ratio = 1.0;
      req.seed = data_seed;
      manifest = build_manifest(req);
      save_manifest(out / "data" / "manifest.json", manifest);
    } else {
      throw ConfigError("one of --manifest or --synthetic is required");
    }
    const TrainResult r = train(cfg, manifest, out);
    std::cout << nlohmann::json{{"steps", r.steps},
                                {"checkpoints", r.checkpoints.size()},
                                {"last_checkpoint", r.checkpoints.empty() ? "" : r.checkpoints.back().string()},
                                {"perceptual_mode", to_string(r.perceptual_mode)}}
                     .dump()
              << '\n';
  });
}
