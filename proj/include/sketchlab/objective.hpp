#pragma once

#include "sketchlab/discriminator.hpp"
#include "sketchlab/generator.hpp"
#include "sketchlab/losses.hpp"
#include "sketchlab/perceptual.hpp"

namespace sketchlab {

/// Selects which generator terms contribute gradients. All on for training;
/// the gradient checks isolate one term at a time.
struct ObjectiveTerms {
  bool gan = true;
  bool feature_matching = true;
  bool perceptual = true;
};

/// One forward/backward sweep of the full objective for a single
/// (sketch, photo) pair.
///
/// Generator parameter gradients of total_g are accumulated into the
/// generator's Param::grad. When `train_discriminator` is set, gradients of
/// the discriminator objective are accumulated into the discriminator's
/// parameters as well. Both use the discriminator's current weights, so the
/// caller can step the two optimizers afterwards in either order.
template <typename T>
LossReport objective_pass(Generator<T>& g, MultiScaleDiscriminator<T>& d,
                          PerceptualExtractor<T>* perceptual, const Tensor<T>& sketch_signed,
                          const Tensor<T>& photo, double lambda, bool train_discriminator,
                          ObjectiveTerms terms = {}, Tensor<T>* generated = nullptr) {
  if (terms.perceptual && !perceptual) {
    throw ConfigError("objective_pass: perceptual term requested without an extractor");
  }
  typename Generator<T>::Trace g_trace;
  const Tensor<T> fake = g.forward_traced(sketch_signed, g_trace);
  if (generated) *generated = fake;

  typename MultiScaleDiscriminator<T>::Trace real_trace;
  typename MultiScaleDiscriminator<T>::Trace fake_trace;
  const auto real_out = d.forward_traced(concat_channels(sketch_signed, photo), real_trace);
  const auto fake_out = d.forward_traced(concat_channels(sketch_signed, fake), fake_trace);
  const auto real_logits = logit_grids(real_out);
  const auto fake_logits = logit_grids(fake_out);
  const auto n_scales = static_cast<double>(fake_out.size());

  LossParts parts;
  const auto gan_g = adversarial_generator_grad(fake_logits);
  parts.l_gan_g = gan_g.value;
  parts.l_fm_per_scale = feature_matching_loss(feature_lists(real_out), feature_lists(fake_out));

  FeatureLists<T> fm_grads;
  feature_matching_grad(feature_lists(real_out), feature_lists(fake_out), lambda / n_scales,
                        fm_grads);

  Tensor<T> grad_fake(fake.shape());
  std::vector<Tensor<T>> vgg_grads;
  typename PerceptualExtractor<T>::Trace p_trace;
  if (perceptual) {
    const auto feats_real = perceptual->forward(photo);
    const auto feats_fake = perceptual->forward_traced(fake, p_trace);
    parts.l_vgg = perceptual_distance(feats_real, feats_fake, &vgg_grads, lambda);
  }

  // Generator gradient through the discriminator.
  if (terms.gan || terms.feature_matching) {
    std::vector<Tensor<T>> logit_grads(fake_logits.size());
    for (std::size_t k = 0; k < logit_grads.size(); ++k) {
      logit_grads[k] = terms.gan ? gan_g.grads[k] : Tensor<T>(fake_logits[k].shape());
    }
    const FeatureLists<T> no_feature_grads;
    const Tensor<T> grad_input = d.backward(fake_trace, logit_grads,
                                            terms.feature_matching ? fm_grads : no_feature_grads,
                                            false);
    grad_fake += slice_channels(grad_input, sketch_signed.channels(), fake.channels());
  }
  if (terms.perceptual && perceptual) grad_fake += perceptual->backward(p_trace, vgg_grads);

  const auto gan_d = adversarial_discriminator_grad(real_logits, fake_logits);
  parts.l_gan_d = gan_d.value;
  g.backward(g_trace, grad_fake);

  if (train_discriminator) {
    const std::size_t k_count = real_logits.size();
    std::vector<Tensor<T>> real_grads(gan_d.grads.begin(), gan_d.grads.begin() + k_count);
    std::vector<Tensor<T>> fake_grads(gan_d.grads.begin() + k_count, gan_d.grads.end());
    d.backward(real_trace, real_grads, {}, true);
    d.backward(fake_trace, fake_grads, {}, true);
  }
  return compose_objective(parts, lambda);
}

}  // namespace sketchlab
