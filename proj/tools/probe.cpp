// probe: receptive-field embedding analysis over probe groups.
#include <iostream>

#include "sketchlab/checkpoint.hpp"
#include "sketchlab/probe_report.hpp"
#include "tool_main.hpp"

using namespace sketchlab;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Feature-embedding probe suite", "probe"};
  app.require_subcommand(1);

  std::string checkpoint, groups = "synthetic", layers = "0..4", point = "auto";
  fs::path out;
  std::optional<int> random_prefix;
  int base_channels = 48, size = 0, per_group = kDefaultSketchesPerGroup;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  auto* run = app.add_subcommand("run", "Probe a generator and write per-layer scatters + report");
  auto* ckpt = run->add_option("--checkpoint", checkpoint, "Checkpoint blob");
  auto* rnd = run->add_option("--random-prefix", random_prefix,
                              "Probe a randomly initialized generator with this norm-free prefix");
  ckpt->excludes(rnd);
  run->add_option("--base-channels", base_channels, "Width of the random generator")->capture_default_str();
  run->add_option("--groups", groups, "'synthetic' or a directory of G<k> folders")->capture_default_str();
  run->add_option("--layers", layers, "e.g. 0..4 or 0,1")->capture_default_str();
  run->add_option("--point", point, "'auto' or x,y")->capture_default_str();
  run->add_option("--size", size, "Synthetic group resolution (default: checkpoint size or 256)");
  run->add_option("--per-group", per_group, "Synthetic sketches per group")->capture_default_str();
  run->add_option("--seed", seed, "Seed for synthetic groups and random weights")->capture_default_str();
  run->add_option("--threads", threads, "Worker threads (0 = all cores)");
  run->add_option("--out", out, "Output directory")->required();

  return tools::guarded_main(app, argc, argv, [&] {
    if (checkpoint.empty() && !random_prefix) {
      throw ConfigError("one of --checkpoint or --random-prefix is required");
    }
    std::optional<Generator<float>> g;
    if (!checkpoint.empty()) {
      LoadedGenerator lg = load_generator(checkpoint);
      if (size == 0) size = lg.meta.image_size;
      g.emplace(std::move(lg.generator));
    } else {
      GeneratorSpec spec;
      spec.base_channels = base_channels;
      spec.norm_free_prefix = *random_prefix;
      g.emplace(spec, seed);
    }
    if (size == 0) size = kDefaultProbeResolution;

    const std::vector<ProbeGroup> probe_groups = groups == "synthetic"
                                                     ? generate_synthetic_probe_groups(seed, per_group, size)
                                                     : load_probe_groups_dir(groups);
    const int res = probe_groups.front().sketches.front().size();
    const PixelPoint p = parse_probe_point(point).value_or(template_probe_point(res));
    const auto report = run_probe_suite(*g, probe_groups, p, parse_layer_list(layers), out, threads);
    std::cout << report["entries"].dump() << '\n';
  });
}
