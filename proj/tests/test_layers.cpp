#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "sketchlab/layers.hpp"
#include "support.hpp"

using namespace sketchlab;
using sketchlab::testing::central_difference;
using sketchlab::testing::dot;
using sketchlab::testing::random_tensor;
using sketchlab::testing::relative_error;

namespace {

/// Checks input and parameter gradients of `layer` against central
/// differences of L = <r, layer(x)> for a random upstream gradient r.
void check_layer_gradients(Layer<double>& layer, Tensor<double> x, double tol = 1e-6) {
  InitStream init(7);
  layer.initialize(init);
  ParamRefs<double> params;
  layer.collect(params);
  // Perturb affine parameters away from identity so their gradients matter.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto* p : params) {
    for (auto& v : p->value) v += jitter(rng);
  }

  const Tensor<double> probe = layer.forward(x, nullptr);
  const Tensor<double> r = random_tensor<double>(probe.channels(), probe.height(), probe.width(), 11);

  LayerCache<double> cache;
  layer.forward(x, &cache);
  zero_grads(params);
  const Tensor<double> dx = layer.backward(r, cache, true);

  auto loss = [&] { return dot(r, layer.forward(x, nullptr)); };
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double numeric = central_difference(&x.data()[i], loss, h);
    EXPECT_LT(relative_error(dx.data()[i], numeric), tol) << layer.kind() << " input " << i;
  }
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double numeric = central_difference(&p->value[i], loss, h);
      EXPECT_LT(relative_error(p->grad[i], numeric), tol) << p->name << "[" << i << "]";
    }
  }
}

}  // namespace

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Conv2d<double> conv("c", 2, 3, 3, 2, 1);
  check_layer_gradients(conv, random_tensor<double>(2, 7, 6, 1));
}

TEST(Conv2d, KernelFourPaddingTwo) {
  Conv2d<double> conv("c", 2, 2, 4, 2, 2);
  check_layer_gradients(conv, random_tensor<double>(2, 5, 5, 2));
}

TEST(Conv2d, OutputSizeArithmetic) {
  Conv2d<float> conv("c", 1, 1, 3, 2, 1);
  EXPECT_EQ(conv.forward(Tensor<float>(1, 16, 16), nullptr).height(), 8);
  Conv2d<float> big("c", 1, 1, 7, 1, 0);
  EXPECT_THROW(big.forward(Tensor<float>(1, 4, 4), nullptr), ShapeError);
}

TEST(Conv2d, MatchesDirectConvolution) {
  Conv2d<double> conv("c", 2, 2, 3, 1, 1);
  InitStream init(5);
  conv.initialize(init);
  conv.bias.value = {0.25, -0.5};
  const auto x = random_tensor<double>(2, 5, 4, 9);
  const auto y = conv.forward(x, nullptr);
  for (int o = 0; o < 2; ++o) {
    for (int yy = 0; yy < 5; ++yy) {
      for (int xx = 0; xx < 4; ++xx) {
        double acc = conv.bias.value[o];
        for (int c = 0; c < 2; ++c) {
          for (int ki = 0; ki < 3; ++ki) {
            for (int kj = 0; kj < 3; ++kj) {
              const int iy = yy - 1 + ki;
              const int ix = xx - 1 + kj;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
              acc += conv.weight.value[((o * 2 + c) * 3 + ki) * 3 + kj] * x(c, iy, ix);
            }
          }
        }
        EXPECT_NEAR(y(o, yy, xx), acc, 1e-12);
      }
    }
  }
}

TEST(ConvTranspose2d, GradientsAndDoubledSize) {
  ConvTranspose2d<double> deconv("d", 3, 2, 3, 2, 1, 1);
  const auto x = random_tensor<double>(3, 3, 4, 4);
  EXPECT_EQ(deconv.forward(x, nullptr).shape(), (Shape{2, 6, 8}));
  check_layer_gradients(deconv, x);
}

TEST(InstanceNorm2d, Gradients) {
  InstanceNorm2d<double> norm("n", 3);
  check_layer_gradients(norm, random_tensor<double>(3, 4, 5, 6), 1e-5);
}

TEST(Activations, Gradients) {
  LeakyReLU<double> relu;
  check_layer_gradients(relu, random_tensor<double>(2, 3, 3, 8));
  LeakyReLU<double> leaky(0.2);
  check_layer_gradients(leaky, random_tensor<double>(2, 3, 3, 9));
  Tanh<double> tanh_layer;
  check_layer_gradients(tanh_layer, random_tensor<double>(2, 3, 3, 10));
}

TEST(Padding, ReflectionValuesAndGradients) {
  ReflectionPad2d<double> pad(2);
  Tensor<double> x(1, 3, 3);
  for (int i = 0; i < 9; ++i) x.data()[i] = i;
  const auto y = pad.forward(x, nullptr);
  EXPECT_EQ(y.shape(), (Shape{1, 7, 7}));
  EXPECT_EQ(y(0, 0, 0), x(0, 2, 2));
  EXPECT_EQ(y(0, 2, 0), x(0, 0, 2));
  EXPECT_EQ(y(0, 6, 6), x(0, 0, 0));
  check_layer_gradients(pad, random_tensor<double>(2, 4, 5, 12));
  EXPECT_THROW(pad.forward(Tensor<double>(1, 2, 2), nullptr), ShapeError);
}

TEST(Pooling, AverageExcludesPadding) {
  AvgPool3x3<double> pool;
  Tensor<double> x(1, 4, 4, 2.0);
  const auto y = pool.forward(x, nullptr);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 2.0);
  check_layer_gradients(pool, random_tensor<double>(2, 5, 6, 13));
}

TEST(Pooling, MaxCeilMode) {
  MaxPool2x2<double> pool;
  EXPECT_EQ(pool.forward(Tensor<double>(1, 5, 5), nullptr).shape(), (Shape{1, 3, 3}));
  EXPECT_EQ(pool.forward(Tensor<double>(1, 1, 1), nullptr).shape(), (Shape{1, 1, 1}));
  check_layer_gradients(pool, random_tensor<double>(2, 5, 4, 14));
}

TEST(Residual, Gradients) {
  Sequential<double> body;
  body.add<ReflectionPad2d<double>>(1);
  body.add<Conv2d<double>>("r", 2, 2, 3, 1, 0);
  body.add<InstanceNorm2d<double>>("rn", 2);
  ResidualBlock<double> block(std::move(body));
  check_layer_gradients(block, random_tensor<double>(2, 4, 4, 15), 1e-5);
}

TEST(InstanceNormalize, ConstantChannelIsZero) {
  Tensor<float> x(1, 6, 6, 3.7f);
  const auto y = instance_normalize(x);
  for (float v : y.values()) EXPECT_EQ(v, 0.0f);
}

TEST(InstanceNormalize, TwoLevelChannel) {
  Tensor<double> x(1, 2, 2);
  x.values()[0] = 0;
  x.values()[1] = 2;
  x.values()[2] = 0;
  x.values()[3] = 2;
  const auto y = instance_normalize(x);
  const double expected = 1.0 / std::sqrt(1.0 + kNormEps);
  EXPECT_NEAR(y.values()[0], -expected, 1e-15);
  EXPECT_NEAR(y.values()[1], expected, 1e-15);
}

TEST(InstanceNormalize, StatisticsOnRandomInput) {
  const auto x = random_tensor<float>(4, 8, 8, 21, -3.0, 5.0);
  const auto y = instance_normalize(x);
  for (int c = 0; c < 4; ++c) {
    double mean = 0;
    for (int i = 0; i < 64; ++i) mean += y.channel(c)[i];
    mean /= 64;
    double var = 0;
    for (int i = 0; i < 64; ++i) var += (y.channel(c)[i] - mean) * (y.channel(c)[i] - mean);
    var /= 64;
    EXPECT_LT(std::abs(mean), 1e-5);
    EXPECT_LT(std::abs(var - 1.0), 1e-4);
  }
}

TEST(InstanceNormalize, AffineAndErrors) {
  const auto x = random_tensor<double>(2, 3, 3, 22);
  const std::vector<double> scale = {2.0, 0.5};
  const std::vector<double> shift = {1.0, -1.0};
  const auto plain = instance_normalize(x);
  const auto y = instance_normalize<double>(x, kNormEps, scale, shift);
  for (int i = 0; i < 9; ++i) {
    EXPECT_NEAR(y.channel(0)[i], 2.0 * plain.channel(0)[i] + 1.0, 1e-12);
    EXPECT_NEAR(y.channel(1)[i], 0.5 * plain.channel(1)[i] - 1.0, 1e-12);
  }
  EXPECT_THROW(instance_normalize(x, 0.0), ConfigError);
  auto bad = x;
  bad.values()[4] = std::nan("");
  EXPECT_THROW(instance_normalize(bad), ValidationError);
}
