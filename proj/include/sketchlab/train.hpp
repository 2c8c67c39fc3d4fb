#pragma once

#include <cmath>
#include <exception>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sketchlab/augment.hpp"
#include "sketchlab/bounded_queue.hpp"
#include "sketchlab/checkpoint.hpp"
#include "sketchlab/dataset.hpp"
#include "sketchlab/objective.hpp"
#include "sketchlab/optimizer.hpp"
#include "sketchlab/probe.hpp"

namespace sketchlab {

enum class PerceptualMode { pretrained, random_fixed };

struct TrainConfig {
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  double lambda = kDefaultLambda;
  AdamOptions adam;
  int batch_size = 1;
  int epochs = 1;
  int image_size = 512;
  AugmentPolicy augment;
  std::uint64_t seed = 0;
  PerceptualMode perceptual_mode = PerceptualMode::random_fixed;
  int perceptual_width = 64;
  std::string perceptual_weights;  // P.* parameter blob for pretrained mode
  int checkpoint_every = 0;        // steps; 0 keeps only the final checkpoint
  int loader_threads = 0;          // 0 loads on the training thread

  void validate() const {
    generator.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (image_size < 16 || image_size % 16 != 0 || image_size % generator.size_multiple() != 0) {
      throw ConfigError("image_size must be a positive multiple of 16, got " +
                        std::to_string(image_size));
    }
    if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
    if (perceptual_width < 1) throw ConfigError("perceptual.width must be >= 1");
    if (checkpoint_every < 0 || loader_threads < 0) throw ConfigError("negative count in config");
    augment.validate();
  }
};

inline std::string to_string(PerceptualMode m) {
  return m == PerceptualMode::pretrained ? "pretrained" : "random_fixed";
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  V v{};
  is >> v;
  if (!is || !is.eof()) throw ConfigError("config key " + key + ": bad value '" + text + "'");
  return v;
}

}  // namespace detail

/// Flat `key = value` text; '#' starts a comment. Unknown keys are errors.
inline TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  using detail::parse_number;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
      {"generator.base_channels", [&](auto& k, auto& v) { c.generator.base_channels = parse_number<int>(k, v); }},
      {"generator.n_downsample", [&](auto& k, auto& v) { c.generator.n_downsample = parse_number<int>(k, v); }},
      {"generator.n_resblocks", [&](auto& k, auto& v) { c.generator.n_resblocks = parse_number<int>(k, v); }},
      {"generator.norm_free_prefix", [&](auto& k, auto& v) { c.generator.norm_free_prefix = parse_number<int>(k, v); }},
      {"discriminator.base_channels", [&](auto& k, auto& v) { c.discriminator.base_channels = parse_number<int>(k, v); }},
      {"discriminator.n_layers", [&](auto& k, auto& v) { c.discriminator.n_layers = parse_number<int>(k, v); }},
      {"discriminator.n_scales", [&](auto& k, auto& v) { c.discriminator.n_scales = parse_number<int>(k, v); }},
      {"lambda", [&](auto& k, auto& v) { c.lambda = parse_number<double>(k, v); }},
      {"learning_rate", [&](auto& k, auto& v) { c.adam.learning_rate = parse_number<double>(k, v); }},
      {"beta1", [&](auto& k, auto& v) { c.adam.beta1 = parse_number<double>(k, v); }},
      {"beta2", [&](auto& k, auto& v) { c.adam.beta2 = parse_number<double>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = parse_number<int>(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = parse_number<int>(k, v); }},
      {"image_size", [&](auto& k, auto& v) { c.image_size = parse_number<int>(k, v); }},
      {"augment.d", [&](auto& k, auto& v) { c.augment.d = parse_number<int>(k, v); }},
      {"augment.theta", [&](auto& k, auto& v) { c.augment.theta = parse_number<double>(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"perceptual_mode", [&](auto&, auto& v) {
         if (v == "pretrained") c.perceptual_mode = PerceptualMode::pretrained;
         else if (v == "random_fixed") c.perceptual_mode = PerceptualMode::random_fixed;
         else throw ConfigError("perceptual_mode must be pretrained or random_fixed");
       }},
      {"perceptual.width", [&](auto& k, auto& v) { c.perceptual_width = parse_number<int>(k, v); }},
      {"perceptual.weights", [&](auto&, auto& v) { c.perceptual_weights = v; }},
      {"checkpoint_every", [&](auto& k, auto& v) { c.checkpoint_every = parse_number<int>(k, v); }},
      {"loader_threads", [&](auto& k, auto& v) { c.loader_threads = parse_number<int>(k, v); }},
  };
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  c.augment.rng_seed = c.seed;
  c.validate();
  return c;
}

inline TrainConfig load_train_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_train_config(ss.str());
}

/// Perceptual extractor per config. Pretrained mode without a readable
/// weights file falls back to fixed random weights; `effective` records
/// the mode actually used.
inline PerceptualExtractor<float> make_perceptual(const TrainConfig& cfg, PerceptualMode* effective) {
  PerceptualExtractor<float> p(cfg.perceptual_width, cfg.seed + 2);
  PerceptualMode used = PerceptualMode::random_fixed;
  if (cfg.perceptual_mode == PerceptualMode::pretrained) {
    if (!cfg.perceptual_weights.empty() && fs::exists(cfg.perceptual_weights)) {
      load_params(read_param_blob(cfg.perceptual_weights), p.params());
      used = PerceptualMode::pretrained;
    } else {
      std::clog << "warning: no pretrained perceptual weights at '" << cfg.perceptual_weights
                << "', using fixed random weights\n";
    }
  }
  if (effective) *effective = used;
  return p;
}

struct TrainingSample {
  std::string id;
  Tensor<float> sketch;  // signed, [-1,1]
  Tensor<float> photo;   // decoded photo, [-1,1]
  AugmentDraw augmentation;
};

/// Sketch at `size`: the stored raster when it already matches, otherwise
/// re-rendered from the landmark file.
inline SketchRaster load_sketch(const ManifestEntry& e, int size) {
  SketchRaster s = read_sketch_png(e.sketch_path);
  if (s.size() == size) return s;
  const auto [w, h] = png_dimensions(e.photo_path);
  return render_contour(read_landmarks(e.landmark_path, w), size);
}

inline Tensor<float> load_photo(const ManifestEntry& e, int size) {
  Tensor<float> photo = rgb_from_png(detail::read_file(e.photo_path));
  if (photo.height() != size || photo.width() != size) photo = resize_bilinear(photo, size, size);
  return photo;
}

/// Loads and augments sample `index` of `epoch`. The augmentation draw
/// depends only on (seed, epoch, index), never on loader scheduling.
inline TrainingSample load_training_sample(const ManifestEntry& e, const TrainConfig& cfg,
                                           int epoch, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const SketchRaster sketch = load_sketch(e, cfg.image_size);
  auto [augmented, draw] = augment_contour(sketch, cfg.augment, rng);
  return {e.id, augmented.to_signed(), load_photo(e, cfg.image_size), draw};
}

struct TrainResult {
  std::vector<nlohmann::json> log;
  std::vector<fs::path> checkpoints;
  std::int64_t steps = 0;
  PerceptualMode perceptual_mode = PerceptualMode::random_fixed;
};

class TrainingAborted : public ValidationError {
 public:
  TrainingAborted(std::int64_t step, const std::string& what)
      : ValidationError("training aborted at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Digest of the generator output for `sketch`, logged with checkpoints so
/// a reload can be checked against it.
inline std::string output_digest(const Generator<float>& g, const SketchRaster& sketch) {
  const ByteBuffer png = png_from_rgb(generator_forward(g, sketch).pixels());
  return fnv1a_hex(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
}

namespace detail {

inline void require_finite(const LossReport& r, std::int64_t step) {
  for (double v : {r.l_gan_g, r.l_gan_d, r.l_fm, r.l_vgg, r.total_g}) {
    if (!std::isfinite(v)) throw TrainingAborted(step, "non-finite loss");
  }
}

inline void require_finite(const ParamRefs<float>& params, std::int64_t step) {
  for (const auto* p : params) {
    for (float v : p->value) {
      if (!std::isfinite(v)) throw TrainingAborted(step, "non-finite parameter in " + p->name);
    }
  }
}

}  // namespace detail

/// Adversarial training over the manifest's train split: per batch, one
/// discriminator step and one generator step. Writes train_log.jsonl and
/// checkpoints/step_NNNNNN.sklb under `out_dir`.
inline TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest,
                         const fs::path& out_dir) {
  cfg.validate();
  const auto entries = manifest.select(Split::train);
  if (entries.empty()) throw ValidationError("train: manifest has no train entries");
  manifest.validate();

  fs::create_directories(out_dir / "checkpoints");
  std::ofstream log_file(out_dir / "train_log.jsonl", std::ios::trunc);
  if (!log_file) throw IoError("cannot write training log in " + out_dir.string());

  TrainResult result;
  Generator<float> g(cfg.generator, cfg.seed);
  MultiScaleDiscriminator<float> d(cfg.discriminator, cfg.seed + 1);
  PerceptualExtractor<float> perceptual = make_perceptual(cfg, &result.perceptual_mode);
  auto g_params = g.params();
  auto d_params = d.params();
  Adam<float> g_opt(g_params, cfg.adam);
  Adam<float> d_opt(d_params, cfg.adam);

  const std::string data_hash = manifest_hash(manifest);
  const SketchRaster digest_sketch = load_sketch(entries.front(), cfg.image_size);

  auto emit = [&](nlohmann::json line) {
    log_file << line.dump() << "\n";
    log_file.flush();
    result.log.push_back(std::move(line));
  };
  auto save = [&](std::int64_t step) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06lld.sklb", static_cast<long long>(step));
    const fs::path blob = out_dir / "checkpoints" / name;
    CheckpointMeta meta;
    meta.step = step;
    meta.dataset_hash = data_hash;
    meta.image_size = cfg.image_size;
    save_checkpoint(blob, g, &d, meta);
    result.checkpoints.push_back(blob);
    emit({{"event", "checkpoint"},
          {"step", step},
          {"path", blob.string()},
          {"eval_digest", output_digest(g, digest_sketch)}});
  };

  emit({{"event", "start"},
        {"train_pairs", entries.size()},
        {"image_size", cfg.image_size},
        {"lambda", cfg.lambda},
        {"perceptual_mode", to_string(result.perceptual_mode)},
        {"dataset_hash", data_hash}});

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(cfg.seed + 0x5851f42d4c957f2dull * (epoch + 1));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }

    BoundedQueue<TrainingSample> queue(static_cast<std::size_t>(2 * cfg.batch_size));
    std::exception_ptr loader_error;
    std::jthread loader;
    if (cfg.loader_threads > 0) {
      loader = std::jthread([&] {
        try {
          for (std::size_t i = 0; i < order.size(); ++i) {
            if (!queue.push(load_training_sample(entries[order[i]], cfg, epoch, i))) return;
          }
        } catch (...) {
          loader_error = std::current_exception();
        }
        queue.close();
      });
    }
    std::size_t next = 0;
    auto next_sample = [&]() -> std::optional<TrainingSample> {
      if (cfg.loader_threads > 0) {
        auto item = queue.pop();
        if (!item && loader_error) std::rethrow_exception(loader_error);
        return item;
      }
      if (next >= order.size()) return std::nullopt;
      const std::size_t i = next++;
      return load_training_sample(entries[order[i]], cfg, epoch, i);
    };

    try {
      bool more = true;
      while (more) {
        zero_grads(g_params);
        zero_grads(d_params);
        int in_batch = 0;
        LossReport mean{};
        mean.lambda = cfg.lambda;
        for (; in_batch < cfg.batch_size; ++in_batch) {
          auto sample = next_sample();
          if (!sample) {
            more = false;
            break;
          }
          LossReport r;
          try {
            r = objective_pass(g, d, &perceptual, sample->sketch, sample->photo, cfg.lambda, true);
          } catch (const ValidationError& e) {
            throw TrainingAborted(step + 1, e.what());
          }
          detail::require_finite(r, step + 1);
          mean.l_gan_g += r.l_gan_g;
          mean.l_gan_d += r.l_gan_d;
          mean.l_fm += r.l_fm;
          mean.l_vgg += r.l_vgg;
          mean.total_g += r.total_g;
        }
        if (in_batch == 0) break;
        ++step;
        const double k = 1.0 / in_batch;
        d_opt.step(k);
        g_opt.step(k);
        detail::require_finite(g_params, step);
        detail::require_finite(d_params, step);
        emit({{"event", "step"},
              {"epoch", epoch},
              {"step", step},
              {"batch", in_batch},
              {"l_gan_g", mean.l_gan_g * k},
              {"l_gan_d", mean.l_gan_d * k},
              {"l_fm", mean.l_fm * k},
              {"l_vgg", mean.l_vgg * k},
              {"total_g", mean.total_g * k}});
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) save(step);
      }
    } catch (const TrainingAborted& e) {
      queue.close();
      emit({{"event", "abort"}, {"step", e.step()}, {"reason", e.what()}});
      throw;
    }
    queue.close();
  }
  if (result.checkpoints.empty() || cfg.checkpoint_every == 0 || step % cfg.checkpoint_every != 0) {
    save(step);
  }
  result.steps = step;
  emit({{"event", "done"}, {"steps", step}});
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalEntry {
  std::string id;
  fs::path output;
  double l1 = 0;  // mean |generated - photo| in [-1,1] units
};

struct EvalSummary {
  fs::path checkpoint;
  int image_size = 0;
  std::vector<EvalEntry> entries;
  double mean_l1 = 0;
};

inline nlohmann::json summary_to_json(const EvalSummary& s) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : s.entries) {
    entries.push_back({{"id", e.id}, {"output", e.output.string()}, {"l1", e.l1}});
  }
  return {{"checkpoint", s.checkpoint.string()},
          {"image_size", s.image_size},
          {"entries", entries},
          {"mean_l1", s.mean_l1}};
}

/// Generates one PNG per test entry and a summary.json next to them.
/// `requested_size` (when non-zero) must match the checkpoint.
inline EvalSummary evaluate(const fs::path& checkpoint, const std::vector<ManifestEntry>& test,
                            const fs::path& out_dir, int requested_size = 0) {
  const LoadedGenerator loaded = load_generator(checkpoint);
  const int size = loaded.meta.image_size;
  if (requested_size != 0 && requested_size != size) {
    throw ConfigError("checkpoint was trained at " + std::to_string(size) + "px, requested " +
                      std::to_string(requested_size) + "px");
  }
  fs::create_directories(out_dir);
  EvalSummary summary{checkpoint, size, {}, 0};
  for (const auto& e : test) {
    const SketchRaster sketch = read_sketch_png(e.sketch_path);
    if (sketch.size() != size) {
      throw ConfigError("sketch " + e.id + " is " + std::to_string(sketch.size()) +
                        "px but the checkpoint expects " + std::to_string(size) + "px");
    }
    const FacePhoto out = generator_forward(loaded.generator, sketch);
    const fs::path path = out_dir / (e.id + ".png");
    write_photo_png(path, out);
    const Tensor<float> photo = load_photo(e, size);
    double l1 = 0;
    for (std::size_t i = 0; i < photo.size(); ++i) l1 += std::abs(out.pixels().data()[i] - photo.data()[i]);
    l1 /= static_cast<double>(photo.size());
    summary.entries.push_back({e.id, path, l1});
    summary.mean_l1 += l1;
  }
  if (!summary.entries.empty()) summary.mean_l1 /= static_cast<double>(summary.entries.size());
  std::ofstream os(out_dir / "summary.json", std::ios::trunc);
  if (!os) throw IoError("cannot write summary in " + out_dir.string());
  os << summary_to_json(summary).dump(2) << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// Model comparison

struct SketchPair {
  SketchRaster original;
  SketchRaster edited;
  std::optional<PixelWindow> region;  // bounding box of the edit
};

struct NamedModel {
  std::string name;
  const Generator<float>* generator;
};

/// Mean absolute change outside `keep_out` (inclusive window), or 0 when
/// no pixel lies outside it.
inline double change_outside(const Tensor<float>& a, const Tensor<float>& b, int stride,
                             const std::function<bool(int, int)>& excluded) {
  double sum = 0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if (excluded(x * stride, y * stride)) continue;
        sum += std::abs(a(c, y, x) - b(c, y, x));
        ++count;
      }
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

/// For each pair and model: generated images, pixel change outside the
/// dilated edit box, and per-layer encoder change over cells whose
/// receptive window misses the edit box.
inline nlohmann::json compare_models(const std::vector<NamedModel>& models,
                                     const std::vector<SketchPair>& pairs, const fs::path& out_dir,
                                     int dilation = 8) {
  if (models.empty()) throw ConfigError("compare_models: no models");
  int size = -1;
  for (const auto& p : pairs) {
    if (!p.region) throw ValidationError("compare_models: sketch pair without an edit region");
    if (p.original.size() != p.edited.size()) throw ShapeError("compare_models: pair size mismatch");
    if (size >= 0 && p.original.size() != size) throw ShapeError("compare_models: mixed resolutions");
    size = p.original.size();
  }
  fs::create_directories(out_dir);
  nlohmann::json report;
  report["dilation"] = dilation;
  report["models"] = nlohmann::json::array();
  for (const auto& m : models) {
    report["models"].push_back({{"name", m.name},
                                {"norm_free_prefix", m.generator->spec().norm_free_prefix}});
  }
  report["pairs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    const PixelWindow box = *pair.region;
    const PixelWindow dilated{box.x0 - dilation, box.y0 - dilation, box.x1 + dilation, box.y1 + dilation};
    nlohmann::json entry{{"index", i},
                         {"region", {box.x0, box.y0, box.x1, box.y1}},
                         {"results", nlohmann::json::object()}};
    for (const auto& m : models) {
      const auto& g = *m.generator;
      if (size % g.spec().size_multiple() != 0) throw ShapeError("compare_models: size not supported");
      const FacePhoto a = generator_forward(g, pair.original);
      const FacePhoto b = generator_forward(g, pair.edited);
      const std::string stem = "pair" + std::to_string(i) + "_" + m.name;
      write_photo_png(out_dir / (stem + "_original.png"), a);
      write_photo_png(out_dir / (stem + "_edited.png"), b);
      const double pixel_change = change_outside(a.pixels(), b.pixels(), 1, [&](int x, int y) {
        return dilated.contains(x, y);
      });

      const int n_down = g.spec().n_downsample;
      const auto fa = extract_feature_stack(g, pair.original, n_down);
      const auto fb = extract_feature_stack(g, pair.edited, n_down);
      nlohmann::json feature_change = nlohmann::json::array();
      for (int l = 0; l <= n_down; ++l) {
        const int stride = g.spec().layer_stride(l);
        feature_change.push_back(change_outside(
            fa[l].values, fb[l].values, stride, [&](int x, int y) {
              const PixelWindow w = receptive_window(l, {x, y}, n_down);
              return !(w.x1 < box.x0 || w.x0 > box.x1 || w.y1 < box.y0 || w.y0 > box.y1);
            }));
      }
      entry["results"][m.name] = {{"pixel_change_outside", pixel_change},
                                  {"feature_change_outside", feature_change},
                                  {"original_image", (out_dir / (stem + "_original.png")).string()},
                                  {"edited_image", (out_dir / (stem + "_edited.png")).string()}};
    }
    report["pairs"].push_back(std::move(entry));
  }
  std::ofstream os(out_dir / "comparison.json", std::ios::trunc);
  if (!os) throw IoError("cannot write comparison report in " + out_dir.string());
  os << report.dump(2) << "\n";
  return report;
}

/// Template face and a copy with a reshaped nose; the region is the
/// stroke-level bounding box of the change.
inline SketchPair nose_edit_pair(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const FaceShape base = random_face_shape(rng, 0.3);
  FaceShape edited = base;
  edited.nose_half_width += 0.02;
  edited.nose_tip += 0.015;
  edited.nose_base_y = edited.nose_tip + 0.035;
  SketchPair p{render_contour(face_template(base, size), size),
               render_contour(face_template(edited, size), size), std::nullopt};
  PixelWindow box{size, size, -1, -1};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (p.original.at(x, y) == p.edited.at(x, y)) continue;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x);
      box.y1 = std::max(box.y1, y);
    }
  }
  p.region = box;
  return p;
}

}  // namespace sketchlab
