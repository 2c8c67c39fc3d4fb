// forge: sketch rendering, augmentation, average face, manifests.
#include <iostream>

#include "sketchlab/augment.hpp"
#include "sketchlab/dataset.hpp"
#include "tool_main.hpp"

using namespace sketchlab;

namespace {

std::vector<fs::path> files_with(const fs::path& p, std::initializer_list<const char*> exts) {
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p)) {
    for (const char* x : exts) {
      if (e.path().extension() == x) out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path output_for(const fs::path& in, const fs::path& out, bool many) {
  if (!many) return out;
  fs::create_directories(out);
  return out / (in.stem().string() + ".png");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-pair forge: contours, augmentation, manifests", "forge"};
  app.require_subcommand(1);

  fs::path in, out;
  int size = kDefaultResolution;
  auto* render = app.add_subcommand("render", "Render landmark file(s) to contour sketches");
  render->add_option("--landmarks", in, "Landmark file or directory")->required();
  render->add_option("--out", out, "Output PNG (or directory for many)")->required();
  render->add_option("--size", size, "Output resolution")->capture_default_str();
  double frame = 0;
  render->add_option("--frame", frame, "Landmark coordinate frame size (default: --size)");

  AugmentPolicy policy;
  std::uint64_t seed = 0;
  auto* augment = app.add_subcommand("augment", "Randomly shift and rotate sketch(es)");
  augment->add_option("--in", in, "Sketch PNG or directory")->required();
  augment->add_option("--out", out, "Output PNG (or directory)")->required();
  augment->add_option("--d", policy.d, "Max offset in pixels")->capture_default_str();
  augment->add_option("--theta", policy.theta, "Max rotation in degrees")->capture_default_str();
  augment->add_option("--seed", seed, "RNG seed")->capture_default_str();

  fs::path binarized;
  auto* avg = app.add_subcommand("average-face", "Pixel-wise mean of a sketch directory");
  avg->add_option("--in", in, "Directory of sketch PNGs")->required();
  avg->add_option("--out", out, "Grayscale output PNG")->required();
  avg->add_option("--binarized", binarized, "Also write a thresholded copy");

  ManifestRequest req;
  auto* manifest = app.add_subcommand("manifest", "Build a train/test manifest");
  manifest->add_option("--photos", req.photo_dir, "Photo directory")->required();
  manifest->add_option("--landmarks", req.landmark_dir, "Landmark directory")->required();
  manifest->add_option("--sketches", req.sketch_dir, "Where rendered sketches go")->required();
  auto* split_opt = manifest->add_option("--split", req.split_ratio, "Train fraction")->capture_default_str();
  auto* train_opt = manifest->add_option("--train-count", req.train_count, "Fixed train count");
  auto* test_opt = manifest->add_option("--test-count", req.test_count, "Fixed test count");
  train_opt->needs(test_opt);
  test_opt->needs(train_opt);
  split_opt->excludes(train_opt);
  manifest->add_option("--seed", req.seed, "Shuffle seed")->capture_default_str();
  manifest->add_option("--size", req.render_size, "Sketch resolution")->capture_default_str();
  manifest->add_option("--threads", req.threads, "Worker threads (0 = all cores)");
  manifest->add_option("--out", out, "Manifest JSON path")->required();

  int count = 64;
  auto* synth = app.add_subcommand("synth", "Write synthetic photo/landmark pairs");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--count", count, "Number of pairs")->capture_default_str();
  synth->add_option("--size", size, "Resolution")->capture_default_str();
  synth->add_option("--seed", seed, "RNG seed")->capture_default_str();

  return tools::guarded_main(app, argc, argv, [&] {
    if (*render) {
      const auto files = files_with(in, {".json", ".txt", ".pts"});
      const bool many = fs::is_directory(in);
      for (const auto& f : files) {
        write_sketch_png(output_for(f, out, many), render_contour(read_landmarks(f, frame > 0 ? frame : size), size));
      }
      std::cout << "rendered " << files.size() << " sketch(es)\n";
    } else if (*augment) {
      policy.rng_seed = seed;
      policy.validate();
      std::mt19937_64 rng(seed);
      const auto files = files_with(in, {".png"});
      const bool many = fs::is_directory(in);
      for (const auto& f : files) {
        const auto [s, draw] = augment_contour(read_sketch_png(f), policy, rng);
        write_sketch_png(output_for(f, out, many), s);
        std::cout << nlohmann::json{{"file", f.filename().string()}, {"dx", draw.dx},
                                    {"dy", draw.dy}, {"angle", draw.angle}}
                         .dump()
                  << '\n';
      }
    } else if (*avg) {
      std::vector<SketchRaster> sketches;
      for (const auto& f : files_with(in, {".png"})) sketches.push_back(read_sketch_png(f));
      const Tensor<float> mean = average_face(sketches);
      detail::write_file(out, png_from_gray(mean));
      if (!binarized.empty()) write_sketch_png(binarized, binarize(mean));
      std::cout << "averaged " << sketches.size() << " sketch(es)\n";
    } else if (*manifest) {
      const DatasetManifest m = build_manifest(req);
      save_manifest(out, m);
      std::cout << nlohmann::json{{"train", m.count(Split::train)}, {"test", m.count(Split::test)},
                                  {"hash", manifest_hash(m)}}
                       .dump()
                << '\n';
    } else if (*synth) {
      const auto dirs = write_synthetic_pairs(out, count, size, seed);
      std::cout << "photos: " << dirs.photo_dir.string() << "\nlandmarks: " << dirs.landmark_dir.string()
                << '\n';
    }
  });
}
