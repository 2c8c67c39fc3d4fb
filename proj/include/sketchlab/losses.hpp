#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "sketchlab/discriminator.hpp"
#include "sketchlab/errors.hpp"
#include "sketchlab/perceptual.hpp"
#include "sketchlab/tensor.hpp"

namespace sketchlab {

enum class AdversarialSide { generator, discriminator };

inline constexpr double kDefaultLambda = 10.0;

/// A scalar loss and its gradient with respect to each input tensor.
template <typename T>
struct LossWithGrad {
  double value = 0.0;
  std::vector<Tensor<T>> grads;
};

namespace detail {

template <typename T>
void require_finite(const std::vector<Tensor<T>>& ts, const char* what) {
  for (const auto& t : ts) {
    if (!t.all_finite()) throw ValidationError(std::string(what) + ": non-finite values");
  }
}

/// mean((z - target)^2) and its gradient 2 (z - target) / N.
template <typename T>
double squared_error(const Tensor<T>& z, double target, Tensor<T>* grad) {
  double sum = 0.0;
  const double n = static_cast<double>(z.size());
  if (grad) *grad = Tensor<T>(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = static_cast<double>(z.data()[i]) - target;
    sum += d * d;
    if (grad) grad->data()[i] = static_cast<T>(2.0 * d / n);
  }
  return sum / n;
}

/// mean|a - b| and, optionally, d/db = sign(b - a) / N * weight.
template <typename T>
double mean_l1(const Tensor<T>& a, const Tensor<T>& b, double weight, Tensor<T>* grad_b) {
  a.require_same_shape(b, "mean_l1");
  const double n = static_cast<double>(a.size());
  double sum = 0.0;
  if (grad_b) *grad_b = Tensor<T>(b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(b.data()[i]) - static_cast<double>(a.data()[i]);
    sum += std::abs(d);
    if (grad_b) {
      const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      grad_b->data()[i] = static_cast<T>(weight * s / n);
    }
  }
  return sum / n;
}

}  // namespace detail

/// Least-squares adversarial loss summed over scales.
///   discriminator: sum_k mean((real_k - 1)^2) + mean(fake_k^2)
///   generator:     sum_k mean((fake_k - 1)^2)
template <typename T>
double adversarial_loss(const std::vector<Tensor<T>>& logits_real,
                        const std::vector<Tensor<T>>& logits_fake, AdversarialSide side) {
  if (logits_fake.empty()) throw ShapeError("adversarial_loss: no scales supplied");
  detail::require_finite(logits_fake, "adversarial_loss");
  double total = 0.0;
  if (side == AdversarialSide::generator) {
    for (const auto& f : logits_fake) total += detail::squared_error<T>(f, 1.0, nullptr);
    return total;
  }
  if (logits_real.size() != logits_fake.size()) {
    throw ShapeError("adversarial_loss: real/fake scale counts differ");
  }
  detail::require_finite(logits_real, "adversarial_loss");
  for (std::size_t k = 0; k < logits_fake.size(); ++k) {
    total += detail::squared_error<T>(logits_real[k], 1.0, nullptr);
    total += detail::squared_error<T>(logits_fake[k], 0.0, nullptr);
  }
  return total;
}

/// Generator-side adversarial loss with gradients w.r.t. each fake logit grid.
template <typename T>
LossWithGrad<T> adversarial_generator_grad(const std::vector<Tensor<T>>& logits_fake) {
  detail::require_finite(logits_fake, "adversarial_loss");
  LossWithGrad<T> out;
  out.grads.resize(logits_fake.size());
  for (std::size_t k = 0; k < logits_fake.size(); ++k) {
    out.value += detail::squared_error(logits_fake[k], 1.0, &out.grads[k]);
  }
  return out;
}

/// Discriminator-side loss; grads hold the real-logit gradients followed by
/// the fake-logit gradients (2K entries).
template <typename T>
LossWithGrad<T> adversarial_discriminator_grad(const std::vector<Tensor<T>>& logits_real,
                                               const std::vector<Tensor<T>>& logits_fake) {
  if (logits_real.size() != logits_fake.size()) {
    throw ShapeError("adversarial_loss: real/fake scale counts differ");
  }
  detail::require_finite(logits_real, "adversarial_loss");
  detail::require_finite(logits_fake, "adversarial_loss");
  const std::size_t k_count = logits_real.size();
  LossWithGrad<T> out;
  out.grads.resize(2 * k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    out.value += detail::squared_error(logits_real[k], 1.0, &out.grads[k]);
    out.value += detail::squared_error(logits_fake[k], 0.0, &out.grads[k_count + k]);
  }
  return out;
}

template <typename T>
using FeatureLists = std::vector<std::vector<Tensor<T>>>;

namespace detail {

template <typename T>
void check_structure(const FeatureLists<T>& a, const FeatureLists<T>& b) {
  if (a.size() != b.size()) throw ShapeError("feature_matching_loss: scale counts differ");
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != b[k].size() || a[k].empty()) {
      throw ShapeError("feature_matching_loss: layer lists differ at scale " + std::to_string(k));
    }
    for (std::size_t l = 0; l < a[k].size(); ++l) {
      if (!(a[k][l].shape() == b[k][l].shape())) {
        throw ShapeError("feature_matching_loss: feature shapes differ at scale " +
                         std::to_string(k) + " layer " + std::to_string(l));
      }
    }
  }
}

}  // namespace detail

/// Per-scale feature-matching loss: the mean over layers of the mean absolute
/// feature difference. The cross-scale average belongs to compose_objective.
template <typename T>
std::vector<double> feature_matching_loss(const FeatureLists<T>& feats_real,
                                          const FeatureLists<T>& feats_fake) {
  detail::check_structure(feats_real, feats_fake);
  std::vector<double> per_scale;
  for (std::size_t k = 0; k < feats_real.size(); ++k) {
    double acc = 0.0;
    for (std::size_t l = 0; l < feats_real[k].size(); ++l) {
      acc += detail::mean_l1<T>(feats_real[k][l], feats_fake[k][l], 1.0, nullptr);
    }
    per_scale.push_back(acc / static_cast<double>(feats_real[k].size()));
  }
  return per_scale;
}

/// Gradient of `weight * sum_k fm_k` w.r.t. the fake features. `value` is the
/// unweighted per-scale sum.
template <typename T>
LossWithGrad<T> feature_matching_grad(const FeatureLists<T>& feats_real,
                                      const FeatureLists<T>& feats_fake, double weight,
                                      FeatureLists<T>& grads_fake) {
  detail::check_structure(feats_real, feats_fake);
  LossWithGrad<T> out;
  grads_fake.assign(feats_real.size(), {});
  for (std::size_t k = 0; k < feats_real.size(); ++k) {
    const double layers = static_cast<double>(feats_real[k].size());
    grads_fake[k].resize(feats_real[k].size());
    double acc = 0.0;
    for (std::size_t l = 0; l < feats_real[k].size(); ++l) {
      acc += detail::mean_l1(feats_real[k][l], feats_fake[k][l], weight / layers,
                             &grads_fake[k][l]);
    }
    out.value += acc / layers;
  }
  return out;
}

template <typename T>
FeatureLists<T> feature_lists(const std::vector<ScaleResult<T>>& results) {
  FeatureLists<T> out;
  for (const auto& r : results) out.push_back(r.features);
  return out;
}

template <typename T>
std::vector<Tensor<T>> logit_grids(const std::vector<ScaleResult<T>>& results) {
  std::vector<Tensor<T>> out;
  for (const auto& r : results) out.push_back(r.logits);
  return out;
}

/// sum_i w_i * mean|F_i(x) - F_i(x_hat)| over precomputed feature stacks.
template <typename T>
double perceptual_distance(const std::vector<Tensor<T>>& feats_x,
                           const std::vector<Tensor<T>>& feats_x_hat,
                           std::vector<Tensor<T>>* grads_x_hat = nullptr, double weight = 1.0) {
  if (feats_x.size() != kPerceptualWeights.size() || feats_x_hat.size() != feats_x.size()) {
    throw ShapeError("perceptual loss expects five feature stages");
  }
  if (grads_x_hat) grads_x_hat->assign(feats_x.size(), {});
  double total = 0.0;
  for (std::size_t i = 0; i < feats_x.size(); ++i) {
    const double w = kPerceptualWeights[i];
    total += w * detail::mean_l1(feats_x[i], feats_x_hat[i], w * weight,
                                 grads_x_hat ? &(*grads_x_hat)[i] : nullptr);
  }
  return total;
}

template <typename T>
double perceptual_loss(const Tensor<T>& x, const Tensor<T>& x_hat,
                       const PerceptualExtractor<T>* extractor) {
  if (!extractor) {
    throw ConfigError("perceptual_loss: no feature extractor available and no fallback configured");
  }
  x.require_same_shape(x_hat, "perceptual_loss");
  return perceptual_distance(extractor->forward(x), extractor->forward(x_hat));
}

/// Raw loss terms before the lambda-weighted composition.
struct LossParts {
  double l_gan_g = 0.0;
  double l_gan_d = 0.0;
  std::vector<double> l_fm_per_scale;
  double l_vgg = 0.0;
};

struct LossReport {
  double l_gan_g = 0.0;
  double l_gan_d = 0.0;
  /// Cross-scale average (1/K) sum_k L_FM_k.
  double l_fm = 0.0;
  double l_vgg = 0.0;
  double total_g = 0.0;
  double lambda = kDefaultLambda;
};

/// total_g = l_gan_g + lambda * ((1/K) sum_k fm_k + l_vgg). The discriminator
/// objective l_gan_d is reported alongside, unweighted.
inline LossReport compose_objective(const LossParts& parts, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("compose_objective: lambda must be finite and non-negative");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(parts.l_gan_g) || !finite(parts.l_gan_d) || !finite(parts.l_vgg) ||
      !std::all_of(parts.l_fm_per_scale.begin(), parts.l_fm_per_scale.end(), finite)) {
    throw ValidationError("compose_objective: non-finite loss term");
  }
  LossReport r;
  r.l_gan_g = parts.l_gan_g;
  r.l_gan_d = parts.l_gan_d;
  r.l_vgg = parts.l_vgg;
  r.lambda = lambda;
  if (!parts.l_fm_per_scale.empty()) {
    r.l_fm = std::accumulate(parts.l_fm_per_scale.begin(), parts.l_fm_per_scale.end(), 0.0) /
             static_cast<double>(parts.l_fm_per_scale.size());
  }
  r.total_g = r.l_gan_g + lambda * (r.l_fm + r.l_vgg);
  return r;
}

}  // namespace sketchlab
