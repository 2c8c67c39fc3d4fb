#include <gtest/gtest.h>

#include "sketchlab/discriminator.hpp"
#include "sketchlab/generator.hpp"
#include "support.hpp"

using namespace sketchlab;

namespace {

GeneratorSpec small_spec(int norm_free_prefix) {
  GeneratorSpec s;
  s.base_channels = 4;
  s.n_resblocks = 1;
  s.norm_free_prefix = norm_free_prefix;
  return s;
}

SketchRaster random_sketch(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution stroke(0.1);
  SketchRaster s(size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (stroke(rng)) s.set(x, y, 0.0f);
    }
  }
  return s;
}

// Stand-alone shape oracle: floor((n + 2p - k) / s) + 1.
int conv_arith(int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

}  // namespace

TEST(BuildGenerator, NormalizationPresenceFollowsPrefix) {
  GeneratorSpec spec;
  spec.base_channels = 2;
  spec.n_resblocks = 1;
  spec.norm_free_prefix = 2;
  Generator<float> ours(spec, 1);
  EXPECT_FALSE(ours.layer_normalized(0));
  EXPECT_FALSE(ours.layer_normalized(1));
  for (int l = 2; l <= 4; ++l) EXPECT_TRUE(ours.layer_normalized(l));

  spec.norm_free_prefix = 0;
  Generator<float> baseline(spec, 1);
  for (int l = 0; l <= 4; ++l) EXPECT_TRUE(baseline.layer_normalized(l));

  spec.norm_free_prefix = 5;
  Generator<float> m1(spec, 1);
  for (int l = 0; l <= 4; ++l) EXPECT_FALSE(m1.layer_normalized(l));
}

TEST(BuildGenerator, RejectsOutOfRangePrefix) {
  GeneratorSpec spec;
  spec.norm_free_prefix = 6;
  EXPECT_THROW(Generator<float>(spec, 0), ConfigError);
  spec.norm_free_prefix = -1;
  EXPECT_THROW(Generator<float>(spec, 0), ConfigError);
}

TEST(BuildGenerator, SameSeedSameParameters) {
  Generator<float> a(small_spec(2), 42);
  Generator<float> b(small_spec(2), 42);
  Generator<float> c(small_spec(2), 43);
  auto pa = a.params();
  auto pb = b.params();
  auto pc = c.params();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    any_diff |= pa[i]->value != pc[i]->value;
  }
  EXPECT_TRUE(any_diff);
}

TEST(GeneratorForward, ShapeRangeAndDeterminism) {
  Generator<float> g(small_spec(2), 3);
  const auto s = random_sketch(128, 5);
  const FacePhoto a = generator_forward(g, s);
  const FacePhoto b = generator_forward(g, s);
  EXPECT_EQ(a.pixels().shape(), (Shape{3, 128, 128}));
  EXPECT_EQ(a, b);
  for (float v : a.pixels().values()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(GeneratorForward, RejectsIndivisibleSize) {
  Generator<float> g(small_spec(2), 3);
  EXPECT_THROW(generator_forward(g, SketchRaster(72)), ShapeError);
}

TEST(ExtractFeatures, ChannelAndStrideTable) {
  GeneratorSpec spec;  // default widths 48..768
  spec.n_resblocks = 0;
  Generator<float> g(spec, 9);
  for (int size : {128, 256}) {
    const auto maps = extract_feature_stack(g, random_sketch(size, 1), 4);
    ASSERT_EQ(maps.size(), 5u);
    const int expected_c[] = {48, 96, 192, 384, 768};
    for (int l = 0; l < 5; ++l) {
      EXPECT_EQ(maps[l].channels(), expected_c[l]);
      EXPECT_EQ(maps[l].stride_to_input, 1 << l);
      EXPECT_EQ(maps[l].values.height(), size >> l);
      EXPECT_EQ(maps[l].values.width(), size >> l);
    }
  }
  EXPECT_THROW(extract_features(g, random_sketch(128, 1), 5), RangeError);
  EXPECT_THROW(extract_features(g, random_sketch(128, 1), -1), RangeError);
}

TEST(ProbeVector, FeatureCoordinates) {
  FeatureMap l0{0, 1, Tensor<float>(2, 512, 512)};
  FeatureMap l2{2, 4, Tensor<float>(2, 128, 128)};
  FeatureMap l4{4, 16, Tensor<float>(2, 32, 32)};
  EXPECT_EQ(feature_coords(l0, {100, 100}), (PixelPoint{100, 100}));
  EXPECT_EQ(feature_coords(l4, {100, 100}), (PixelPoint{6, 6}));
  EXPECT_EQ(feature_coords(l2, {511, 511}), (PixelPoint{127, 127}));

  l4.values(1, 6, 6) = 2.5f;
  EXPECT_EQ(probe_vector(l4, {100, 100}), (ProbeVector{0.0f, 2.5f}));
  EXPECT_THROW(probe_vector(l2, {512, 3}), RangeError);
  EXPECT_THROW(probe_vector(l2, {-1, 3}), RangeError);
}

TEST(Discriminator, LogitGridsAt512) {
  DiscriminatorSpec spec;
  spec.base_channels = 4;  // geometry does not depend on width
  MultiScaleDiscriminator<float> d(spec, 2);
  Tensor<float> sk_pixels(1, 512, 512, 1.0f);
  const SketchRaster s(sk_pixels);
  const FacePhoto p(Tensor<float>(3, 512, 512, 0.1f));
  const auto out = discriminate(d, s, p);
  ASSERT_EQ(out.size(), 3u);
  int prev = 1 << 30;
  for (int k = 0; k < 3; ++k) {
    int n = 512 >> k;
    n = conv_arith(n, 4, 2, 2);
    n = conv_arith(n, 4, 2, 2);
    n = conv_arith(n, 4, 2, 2);
    n = conv_arith(n, 4, 1, 2);
    n = conv_arith(n, 4, 1, 2);
    EXPECT_EQ(out[k].logits.height(), n);
    EXPECT_EQ(out[k].logits.width(), n);
    EXPECT_LT(n, prev);
    prev = n;
    EXPECT_EQ(out[k].features.size(), 4u);
  }
  EXPECT_EQ(out[0].logits.height(), 67);

  const auto again = discriminate(d, s, p);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(out[k].logits, again[k].logits);
}

TEST(Discriminator, MismatchedPairIsShapeError) {
  MultiScaleDiscriminator<float> d(DiscriminatorSpec{4, 4, 3, 3}, 2);
  EXPECT_THROW(discriminate(d, SketchRaster(64), FacePhoto(Tensor<float>(3, 32, 32))), ShapeError);
}

TEST(Discriminator, FeatureWidths) {
  MultiScaleDiscriminator<float> d(DiscriminatorSpec{}, 2);
  const auto out = d.forward(Tensor<float>(4, 32, 32));
  const int widths[] = {64, 128, 256, 512};
  for (int l = 0; l < 4; ++l) EXPECT_EQ(out[0].features[l].channels(), widths[l]);
  EXPECT_EQ(out[0].logits.channels(), 1);
}
