#pragma once

#include "sketchlab/objective.hpp"
#include "support.hpp"

namespace sketchlab::testing {

/// Double-precision G, D and perceptual extractor on an 8x8 sample, small
/// enough for exhaustive finite differences.
struct TinySetup {
  Generator<double> g;
  MultiScaleDiscriminator<double> d;
  PerceptualExtractor<double> p;
  Tensor<double> sketch;
  Tensor<double> photo;

  TinySetup()
      : g(GeneratorSpec{2, 2, 1, 2, 1, 3}, 17),
        d(DiscriminatorSpec{4, 2, 3, 3}, 18),
        p(2, 19),
        sketch(random_tensor<double>(1, 8, 8, 20)),
        photo(random_tensor<double>(3, 8, 8, 21, -0.9, 0.9)) {}

  double term(const ObjectiveTerms& terms, double lambda) {
    const auto fake = g.forward(sketch);
    const auto real_out = d.forward(concat_channels(sketch, photo));
    const auto fake_out = d.forward(concat_channels(sketch, fake));
    double total = 0;
    if (terms.gan) total += adversarial_loss({}, logit_grids(fake_out), AdversarialSide::generator);
    if (terms.feature_matching) {
      const auto fm = feature_matching_loss(feature_lists(real_out), feature_lists(fake_out));
      double s = 0;
      for (double v : fm) s += v;
      total += lambda * s / static_cast<double>(fm.size());
    }
    if (terms.perceptual) total += lambda * perceptual_loss(photo, fake, &p);
    return total;
  }
};

}  // namespace sketchlab::testing
