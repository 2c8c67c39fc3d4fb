#include <gtest/gtest.h>

#include <iomanip>
#include <random>

#include "sketchlab/objective.hpp"
#include "support.hpp"
#include "tiny_setup.hpp"

using namespace sketchlab;
using sketchlab::testing::central_difference;
using sketchlab::testing::random_tensor;
using sketchlab::testing::relative_error;
using sketchlab::testing::TinySetup;

namespace {

constexpr double kGoldenPerceptual = 0.14375137712201436;

std::vector<Tensor<double>> constant_grids(double v) {
  return {Tensor<double>(1, 4, 4, v), Tensor<double>(1, 3, 3, v), Tensor<double>(1, 2, 2, v)};
}

FeatureLists<double> random_features(std::uint64_t seed) {
  FeatureLists<double> f(3);
  for (int k = 0; k < 3; ++k) {
    for (int l = 0; l < 2 + k; ++l) {
      f[k].push_back(random_tensor<double>(2, 3 + l, 2, seed * 100 + k * 10 + l));
    }
  }
  return f;
}

/// Brute-force per-scale FM: nested loops over every element.
std::vector<double> fm_oracle(const FeatureLists<double>& a, const FeatureLists<double>& b) {
  std::vector<double> out;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double layer_sum = 0;
    for (std::size_t l = 0; l < a[k].size(); ++l) {
      double s = 0;
      const auto& x = a[k][l];
      const auto& y = b[k][l];
      for (int c = 0; c < x.channels(); ++c)
        for (int i = 0; i < x.height(); ++i)
          for (int j = 0; j < x.width(); ++j) s += std::abs(x(c, i, j) - y(c, i, j));
      layer_sum += s / static_cast<double>(x.size());
    }
    out.push_back(layer_sum / static_cast<double>(a[k].size()));
  }
  return out;
}

double fm_total(const FeatureLists<double>& a, const FeatureLists<double>& b) {
  double s = 0;
  for (double v : feature_matching_loss(a, b)) s += v;
  return s;
}

}  // namespace

TEST(AdversarialLoss, PerfectDiscriminatorAndGenerator) {
  EXPECT_EQ(adversarial_loss(constant_grids(1.0), constant_grids(0.0), AdversarialSide::discriminator),
            0.0);
  EXPECT_EQ(adversarial_loss({}, constant_grids(1.0), AdversarialSide::generator), 0.0);
}

TEST(AdversarialLoss, HalfLogitsArithmetic) {
  // 3 scales x (0.25 + 0.25)
  EXPECT_DOUBLE_EQ(
      adversarial_loss(constant_grids(0.5), constant_grids(0.5), AdversarialSide::discriminator),
      1.5);
  EXPECT_DOUBLE_EQ(adversarial_loss({}, constant_grids(0.5), AdversarialSide::generator), 0.75);
}

TEST(AdversarialLoss, RejectsNonFinite) {
  auto bad = constant_grids(0.5);
  bad[1].values()[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adversarial_loss(constant_grids(0.5), bad, AdversarialSide::discriminator),
               ValidationError);
}

TEST(FeatureMatching, IdentityOffsetAndOracle) {
  const auto real = random_features(1);
  for (double v : feature_matching_loss(real, real)) EXPECT_EQ(v, 0.0);

  auto shifted = real;
  for (auto& scale : shifted)
    for (auto& t : scale)
      for (auto& v : t.values()) v += 1.0;
  for (double v : feature_matching_loss(real, shifted)) EXPECT_NEAR(v, 1.0, 1e-12);

  const auto other = random_features(2);
  const auto got = feature_matching_loss(real, other);
  const auto want = fm_oracle(real, other);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
}

TEST(FeatureMatching, StructureMismatch) {
  auto a = random_features(1);
  auto b = a;
  b[2].pop_back();
  EXPECT_THROW(feature_matching_loss(a, b), ShapeError);
  b = a;
  b.pop_back();
  EXPECT_THROW(feature_matching_loss(a, b), ShapeError);
}

TEST(FeatureMatching, PseudometricProperties) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto a = random_features(seed);
    const auto b = random_features(seed + 100);
    const auto c = random_features(seed + 200);
    EXPECT_NEAR(fm_total(a, b), fm_total(b, a), 1e-12);
    EXPECT_LE(fm_total(a, c), fm_total(a, b) + fm_total(b, c) + 1e-12);
    EXPECT_GT(fm_total(a, b), 0.0);
  }
}

TEST(ComposeObjective, Arithmetic) {
  LossParts parts{1.0, 0.0, {3.0, 3.0, 3.0}, 2.0};
  EXPECT_DOUBLE_EQ(compose_objective(parts, 10.0).total_g, 51.0);
  EXPECT_DOUBLE_EQ(compose_objective(parts, 0.0).total_g, 1.0);
  LossParts no_aux{0.7, 0.2, {0.0, 0.0, 0.0}, 0.0};
  for (double lambda : {0.0, 1.0, 10.0, 123.0}) {
    EXPECT_EQ(compose_objective(no_aux, lambda).total_g, 0.7);
  }
  EXPECT_THROW(compose_objective(parts, -1.0), ConfigError);
  parts.l_vgg = std::nan("");
  EXPECT_THROW(compose_objective(parts, 1.0), ValidationError);
}

TEST(ComposeObjective, LinearInLambda) {
  LossParts parts{0.3, 0.9, {0.4, 1.1, 0.2}, 0.6};
  const double t0 = compose_objective(parts, 0.0).total_g;
  const double t1 = compose_objective(parts, 1.0).total_g;
  for (double lambda : {2.0, 5.5, 17.0}) {
    EXPECT_NEAR(compose_objective(parts, lambda).total_g, t0 + lambda * (t1 - t0), 1e-12);
  }
}

TEST(PerceptualLoss, IdentityLinearityAndErrors) {
  PerceptualExtractor<double> p(2, 5);
  const auto x = random_tensor<double>(3, 16, 16, 1);
  const auto y = random_tensor<double>(3, 16, 16, 2);
  EXPECT_EQ(perceptual_loss(x, x, &p), 0.0);
  EXPECT_GT(perceptual_loss(x, y, &p), 0.0);

  const auto fx = p.forward(x);
  const auto fy = p.forward(y);
  auto doubled = fy;
  for (std::size_t i = 0; i < fy.size(); ++i)
    for (std::size_t j = 0; j < fy[i].size(); ++j)
      doubled[i].data()[j] = fx[i].data()[j] + 2 * (fy[i].data()[j] - fx[i].data()[j]);
  EXPECT_NEAR(perceptual_distance(fx, doubled), 2 * perceptual_distance(fx, fy), 1e-12);

  EXPECT_THROW(perceptual_loss<double>(x, y, nullptr), ConfigError);
}

TEST(PerceptualLoss, RandomFixedExtractorRegressionValue) {
  // Golden value captured from the first verified run of the float path.
  PerceptualExtractor<float> p(4, 123);
  const auto x = random_tensor<float>(3, 32, 32, 1);
  const auto y = random_tensor<float>(3, 32, 32, 2);
  const double v = perceptual_loss(x, y, &p);
  EXPECT_NEAR(v, kGoldenPerceptual, 1e-5 * kGoldenPerceptual) << std::setprecision(17) << v;
}

namespace {

void check_generator_gradients(const ObjectiveTerms& terms) {
  TinySetup s;
  const double lambda = 10.0;
  auto params = s.g.params();
  zero_grads(params);
  objective_pass(s.g, s.d, &s.p, s.sketch, s.photo, lambda, false, terms);

  int checked = 0;
  double worst = 0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); i += 5) {
      const double numeric =
          central_difference(&p->value[i], [&] { return s.term(terms, lambda); }, 1e-6);
      const double err = relative_error(p->grad[i], numeric, 1e-6);
      worst = std::max(worst, err);
      EXPECT_LT(err, 1e-3) << p->name << "[" << i << "] analytic " << p->grad[i] << " numeric "
                           << numeric;
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

}  // namespace

TEST(GradientCheck, AdversarialTerm) { check_generator_gradients({true, false, false}); }
TEST(GradientCheck, FeatureMatchingTerm) { check_generator_gradients({false, true, false}); }
TEST(GradientCheck, PerceptualTerm) { check_generator_gradients({false, false, true}); }
TEST(GradientCheck, FullObjective) { check_generator_gradients({true, true, true}); }

TEST(ObjectivePass, ReportMatchesForwardOnlyTerms) {
  TinySetup s;
  const auto report = objective_pass(s.g, s.d, &s.p, s.sketch, s.photo, 10.0, true);
  EXPECT_NEAR(report.total_g, s.term({true, true, true}, 10.0), 1e-12);
  EXPECT_NEAR(report.l_gan_g, s.term({true, false, false}, 10.0), 1e-12);
  EXPECT_GT(report.l_gan_d, 0.0);
}

TEST(ObjectivePass, DiscriminatorGradientsMatchFiniteDifferences) {
  TinySetup s;
  auto params = s.d.params();
  zero_grads(params);
  objective_pass(s.g, s.d, &s.p, s.sketch, s.photo, 10.0, true);
  const auto fake = s.g.forward(s.sketch);
  auto d_loss = [&] {
    const auto real_out = s.d.forward(concat_channels(s.sketch, s.photo));
    const auto fake_out = s.d.forward(concat_channels(s.sketch, fake));
    return adversarial_loss(logit_grids(real_out), logit_grids(fake_out),
                            AdversarialSide::discriminator);
  };
  int checked = 0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); i += 11) {
      const double numeric = central_difference(&p->value[i], d_loss, 1e-6);
      EXPECT_LT(relative_error(p->grad[i], numeric, 1e-6), 1e-3) << p->name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}
