// evaluate: run a checkpoint over a manifest's test split.
#include <iostream>

#include "sketchlab/train.hpp"
#include "tool_main.hpp"

using namespace sketchlab;

int main(int argc, char** argv) {
  CLI::App app{"Generate test-split images from a checkpoint", "evaluate"};
  fs::path checkpoint, manifest_path, out;
  int size = 0;
  std::string split = "test";
  app.add_option("--checkpoint", checkpoint, "Checkpoint blob")->required();
  app.add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  app.add_option("--split", split, "train or test")->capture_default_str();
  app.add_option("--size", size, "Expected resolution (must match the checkpoint)");
  app.add_option("--out", out, "Output directory")->required();

  return tools::guarded_main(app, argc, argv, [&] {
    const DatasetManifest m = load_manifest(manifest_path);
    const EvalSummary s = evaluate(checkpoint, m.select(parse_split(split)), out, size);
    std::cout << nlohmann::json{{"images", s.entries.size()}, {"mean_l1", s.mean_l1}}.dump() << '\n';
  });
}
