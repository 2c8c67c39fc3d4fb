#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sketchlab/errors.hpp"
#include "sketchlab/layers.hpp"

namespace sketchlab {

inline constexpr std::array<double, 5> kPerceptualWeights = {1.0 / 32, 1.0 / 16, 1.0 / 8,
                                                             1.0 / 4, 1.0};

/// VGG19-topology feature network truncated at relu5_1, exposing the five
/// slices relu1_1, relu2_1, relu3_1, relu4_1 and relu5_1. `width` is the
/// channel count of the first block (64 for the standard network). Pooling
/// uses ceil mode so very small inputs still reach the last slice.
template <typename T>
class PerceptualExtractor {
 public:
  using Trace = typename StagedNet<T>::Trace;

  /// Fixed random weights (He-normal), used when no pretrained file exists.
  PerceptualExtractor(int width, std::uint64_t seed) : width_(width) {
    if (width < 1) throw ConfigError("PerceptualExtractor: width must be >= 1");
    build();
    InitStream init(seed);
    for (auto* p : net_.params()) {
      if (p->dims.size() == 4) {
        const double fan_in = static_cast<double>(p->dims[1]) * p->dims[2] * p->dims[3];
        init.normal(*p, 0.0, std::sqrt(2.0 / fan_in));
      } else {
        std::fill(p->value.begin(), p->value.end(), T{0});
      }
    }
  }

  PerceptualExtractor(PerceptualExtractor&&) noexcept = default;
  PerceptualExtractor& operator=(PerceptualExtractor&&) noexcept = default;

  int width() const { return width_; }
  static constexpr int stage_count() { return 5; }

  std::vector<Tensor<T>> forward(const Tensor<T>& image) const {
    check(image);
    return net_.forward(image);
  }

  std::vector<Tensor<T>> forward_traced(const Tensor<T>& image, Trace& trace) const {
    check(image);
    net_.forward_traced(image, trace);
    return trace.outputs;
  }

  /// Frozen network: only input gradients are produced.
  Tensor<T> backward(const Trace& trace, const std::vector<Tensor<T>>& stage_grads) {
    return net_.backward(trace, stage_grads, false);
  }

  ParamRefs<T> params() { return net_.params(); }

 private:
  void check(const Tensor<T>& image) const {
    if (image.channels() != 3) throw ShapeError("perceptual extractor expects an RGB image");
  }

  void conv(Sequential<T>& s, const std::string& name, int in, int out) {
    s.template add<Conv2d<T>>("P." + name, in, out, 3, 1, 1);
    s.template add<LeakyReLU<T>>();
  }

  void build() {
    const int w = width_;
    auto& s1 = net_.add_stage();
    conv(s1, "conv1_1", 3, w);

    auto& s2 = net_.add_stage();
    conv(s2, "conv1_2", w, w);
    s2.template add<MaxPool2x2<T>>();
    conv(s2, "conv2_1", w, 2 * w);

    auto& s3 = net_.add_stage();
    conv(s3, "conv2_2", 2 * w, 2 * w);
    s3.template add<MaxPool2x2<T>>();
    conv(s3, "conv3_1", 2 * w, 4 * w);

    auto& s4 = net_.add_stage();
    conv(s4, "conv3_2", 4 * w, 4 * w);
    conv(s4, "conv3_3", 4 * w, 4 * w);
    conv(s4, "conv3_4", 4 * w, 4 * w);
    s4.template add<MaxPool2x2<T>>();
    conv(s4, "conv4_1", 4 * w, 8 * w);

    auto& s5 = net_.add_stage();
    conv(s5, "conv4_2", 8 * w, 8 * w);
    conv(s5, "conv4_3", 8 * w, 8 * w);
    conv(s5, "conv4_4", 8 * w, 8 * w);
    s5.template add<MaxPool2x2<T>>();
    conv(s5, "conv5_1", 8 * w, 8 * w);
  }

  int width_;
  StagedNet<T> net_;
};

}  // namespace sketchlab
