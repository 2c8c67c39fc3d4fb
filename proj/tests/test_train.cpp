#include <gtest/gtest.h>

#include "sketchlab/train.hpp"
#include "support.hpp"

using namespace sketchlab;
using sketchlab::testing::scratch_dir;

namespace {

TrainConfig tiny_config() {
  return parse_train_config(R"(
image_size = 64
epochs = 2
batch_size = 2
seed = 3
generator.base_channels = 4
generator.n_resblocks = 1
discriminator.base_channels = 4
perceptual.width = 2
augment.d = 3
augment.theta = 7
checkpoint_every = 4
)");
}

struct Fixture {
  fs::path root;
  DatasetManifest manifest;
};

Fixture make_dataset(const std::string& name, int pairs, double ratio) {
  Fixture f{scratch_dir(name), {}};
  const auto dirs = write_synthetic_pairs(f.root / "data", pairs, 64, 5);
  ManifestRequest req;
  req.photo_dir = dirs.photo_dir;
  req.landmark_dir = dirs.landmark_dir;
  req.sketch_dir = f.root / "data" / "sketches";
  req.split_ratio = ratio;
  req.seed = 1;
  f.manifest = build_manifest(req);
  return f;
}

std::vector<nlohmann::json> step_lines(const TrainResult& r) {
  std::vector<nlohmann::json> out;
  for (const auto& line : r.log) {
    if (line["event"] == "step") out.push_back(line);
    if (line["event"] == "checkpoint") out.push_back({{"digest", line["eval_digest"]}});
  }
  return out;
}

}  // namespace

TEST(TrainConfig, ParsesFlatKeyValueText) {
  const TrainConfig c = tiny_config();
  EXPECT_EQ(c.image_size, 64);
  EXPECT_EQ(c.generator.base_channels, 4);
  EXPECT_EQ(c.generator.norm_free_prefix, 2);
  EXPECT_EQ(c.augment.d, 3);
  EXPECT_DOUBLE_EQ(c.adam.learning_rate, 2e-4);
  EXPECT_DOUBLE_EQ(c.adam.beta1, 0.5);
  EXPECT_EQ(c.perceptual_mode, PerceptualMode::random_fixed);

  EXPECT_THROW(parse_train_config("bogus = 1"), ConfigError);
  EXPECT_THROW(parse_train_config("image_size = 100"), ConfigError);
  EXPECT_THROW(parse_train_config("batch_size = 0"), ConfigError);
  EXPECT_THROW(parse_train_config("epochs = two"), ConfigError);
  EXPECT_THROW(parse_train_config("lambda"), ConfigError);
  EXPECT_THROW(parse_train_config("perceptual_mode = learned"), ConfigError);
}

TEST(TrainConfig, ShippedConfigsLoad) {
  const TrainConfig desk = load_train_config(SKETCHLAB_SOURCE_DIR "/configs/desk.cfg");
  EXPECT_EQ(desk.image_size, 128);
  EXPECT_EQ(desk.epochs, 5);
  EXPECT_EQ(desk.generator.base_channels, 16);
  EXPECT_EQ(desk.generator.n_resblocks, 2);
  const TrainConfig full = load_train_config(SKETCHLAB_SOURCE_DIR "/configs/full.cfg");
  EXPECT_EQ(full.generator.base_channels, 48);
  EXPECT_EQ(full.augment.d, 25);
}

TEST(TrainingData, PhotoTensorIsTheDecodedFile) {
  const auto f = make_dataset("train_photo", 4, 1.0);
  const TrainConfig cfg = tiny_config();
  for (std::size_t i = 0; i < f.manifest.entries.size(); ++i) {
    const auto& e = f.manifest.entries[i];
    const auto sample = load_training_sample(e, cfg, 0, i);
    EXPECT_EQ(sample.photo, rgb_from_png(detail::read_file(e.photo_path)));
    EXPECT_LE(std::abs(sample.augmentation.dx), 3);
    EXPECT_EQ(load_training_sample(e, cfg, 0, i).sketch, sample.sketch);
  }
}

TEST(Train, TinyRunIsFiniteCheckpointedAndReproducible) {
  const auto f = make_dataset("train_tiny", 6, 1.0);
  const TrainConfig cfg = tiny_config();
  const TrainResult a = train(cfg, f.manifest, f.root / "run_a");
  EXPECT_EQ(a.steps, 6);  // 2 epochs x 3 batches
  ASSERT_GE(a.checkpoints.size(), 1u);
  for (const auto& line : a.log) {
    if (line["event"] != "step") continue;
    for (const char* k : {"l_gan_g", "l_gan_d", "l_fm", "l_vgg", "total_g"}) {
      EXPECT_TRUE(std::isfinite(line[k].get<double>())) << k;
    }
  }
  EXPECT_TRUE(fs::exists(f.root / "run_a" / "train_log.jsonl"));

  TrainConfig threaded = cfg;
  threaded.loader_threads = 1;
  const TrainResult b = train(threaded, f.manifest, f.root / "run_b");
  EXPECT_EQ(step_lines(a), step_lines(b));
}

TEST(Train, LambdaZeroTotalEqualsAdversarialTerm) {
  const auto f = make_dataset("train_lambda0", 4, 1.0);
  TrainConfig cfg = tiny_config();
  cfg.lambda = 0;
  cfg.epochs = 1;
  const TrainResult r = train(cfg, f.manifest, f.root / "run");
  int steps = 0;
  for (const auto& line : r.log) {
    if (line["event"] != "step") continue;
    EXPECT_EQ(line["total_g"].get<double>(), line["l_gan_g"].get<double>());
    ++steps;
  }
  EXPECT_EQ(steps, 2);
}

TEST(Train, CheckpointRoundTripReproducesLoggedOutput) {
  const auto f = make_dataset("train_ckpt", 4, 1.0);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const TrainResult r = train(cfg, f.manifest, f.root / "run");
  const fs::path blob = r.checkpoints.back();
  std::string logged;
  for (const auto& line : r.log) {
    if (line["event"] == "checkpoint" && line["path"] == blob.string()) logged = line["eval_digest"];
  }
  const LoadedGenerator loaded = load_generator(blob);
  const SketchRaster s = load_sketch(f.manifest.select(Split::train).front(), 64);
  EXPECT_EQ(output_digest(loaded.generator, s), logged);
  EXPECT_EQ(loaded.meta.step, r.steps);
  EXPECT_EQ(loaded.meta.dataset_hash, manifest_hash(f.manifest));

  // Saving the reloaded model writes a byte-identical blob.
  auto g = load_generator(blob).generator;
  auto d = load_discriminator(blob, loaded.meta);
  const fs::path again = f.root / "again.sklb";
  save_checkpoint(again, g, &d, loaded.meta);
  EXPECT_EQ(detail::read_file(again), detail::read_file(blob));
}

TEST(Train, AbortsOnDivergenceWithStepRecorded) {
  const auto f = make_dataset("train_nan", 4, 1.0);
  TrainConfig cfg = tiny_config();
  cfg.adam.learning_rate = 1e30;
  cfg.epochs = 3;
  try {
    train(cfg, f.manifest, f.root / "run");
    FAIL() << "expected divergence";
  } catch (const TrainingAborted& e) {
    EXPECT_GE(e.step(), 1);
    std::ifstream log(f.root / "run" / "train_log.jsonl");
    std::string line, last;
    while (std::getline(log, line)) last = line;
    const auto j = nlohmann::json::parse(last);
    EXPECT_EQ(j["event"], "abort");
    EXPECT_EQ(j["step"].get<std::int64_t>(), e.step());
  }
}

TEST(Train, PreflightFailures) {
  const auto f = make_dataset("train_pre", 4, 0.0);
  EXPECT_THROW(train(tiny_config(), f.manifest, f.root / "run"), ValidationError);
  auto g = make_dataset("train_missing", 4, 1.0);
  fs::remove(g.manifest.entries[1].photo_path);
  EXPECT_THROW(train(tiny_config(), g.manifest, g.root / "run"), ValidationError);
}

TEST(Evaluate, OneImagePerTestPairAndBitIdenticalReruns) {
  const auto f = make_dataset("eval", 8, 0.5);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const TrainResult r = train(cfg, f.manifest, f.root / "run");
  const auto test = f.manifest.select(Split::test);
  ASSERT_EQ(test.size(), 4u);
  const EvalSummary s1 = evaluate(r.checkpoints.back(), test, f.root / "eval1");
  const EvalSummary s2 = evaluate(r.checkpoints.back(), test, f.root / "eval2", 64);
  ASSERT_EQ(s1.entries.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(fs::exists(s1.entries[i].output));
    EXPECT_EQ(detail::read_file(s1.entries[i].output), detail::read_file(s2.entries[i].output));
    EXPECT_GT(s1.entries[i].l1, 0.0);
  }
  const auto summary = nlohmann::json::parse(std::ifstream(f.root / "eval1" / "summary.json"));
  EXPECT_EQ(summary["entries"].size(), 4u);
  EXPECT_THROW(evaluate(r.checkpoints.back(), test, f.root / "eval3", 128), ConfigError);
}

TEST(CompareModels, LocalityAndSchema) {
  GeneratorSpec spec;
  spec.base_channels = 4;
  spec.n_resblocks = 1;
  spec.norm_free_prefix = 2;
  const Generator<float> ours(spec, 4);
  spec.norm_free_prefix = 0;
  const Generator<float> baseline(spec, 4);
  spec.norm_free_prefix = 5;
  const Generator<float> m1(spec, 4);
  const std::vector<NamedModel> models{{"baseline", &baseline}, {"ours", &ours}, {"m1", &m1}};

  const SketchPair nose = nose_edit_pair(128, 2);
  ASSERT_NE(nose.original, nose.edited);
  SketchPair same{nose.original, nose.original, PixelWindow{10, 10, 20, 20}};
  const auto dir = scratch_dir("compare");
  const auto report = compare_models(models, {nose, same}, dir);

  const auto& edit = report["pairs"][0]["results"];
  for (int l : {0, 1}) EXPECT_EQ(edit["ours"]["feature_change_outside"][l].get<double>(), 0.0);
  EXPECT_GT(edit["baseline"]["feature_change_outside"][0].get<double>(), 0.0);
  EXPECT_GT(edit["ours"]["pixel_change_outside"].get<double>(), 0.0);
  for (const auto* name : {"baseline", "ours", "m1"}) {
    const auto& r = report["pairs"][1]["results"][name];
    EXPECT_EQ(r["pixel_change_outside"].get<double>(), 0.0);
    for (const auto& v : r["feature_change_outside"]) EXPECT_EQ(v.get<double>(), 0.0);
    EXPECT_TRUE(fs::exists(r["edited_image"].get<std::string>()));
  }

  // Schema snapshot: key sets at each level.
  auto keys = [](const nlohmann::json& j) {
    std::vector<std::string> k;
    for (auto it = j.begin(); it != j.end(); ++it) k.push_back(it.key());
    return k;
  };
  EXPECT_EQ(keys(report), (std::vector<std::string>{"dilation", "models", "pairs"}));
  EXPECT_EQ(keys(report["models"][0]), (std::vector<std::string>{"name", "norm_free_prefix"}));
  EXPECT_EQ(keys(report["pairs"][0]), (std::vector<std::string>{"index", "region", "results"}));
  EXPECT_EQ(keys(edit["m1"]), (std::vector<std::string>{"edited_image", "feature_change_outside",
                                                        "original_image", "pixel_change_outside"}));
  EXPECT_EQ(edit["m1"]["feature_change_outside"].size(), 5u);

  SketchPair unannotated{nose.original, nose.edited, std::nullopt};
  EXPECT_THROW(compare_models(models, {unannotated}, dir), ValidationError);
}
