#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sketchlab/errors.hpp"
#include "sketchlab/layers.hpp"
#include "sketchlab/raster.hpp"

namespace sketchlab {

/// PatchGAN discriminator replicated over an input pyramid. Each scale has
/// `n_layers` stride-2 4x4 convolutions, one stride-1 4x4 convolution and a
/// one-channel logit head. All 4x4 convolutions use padding 2.
struct DiscriminatorSpec {
  int input_channels = 4;
  int base_channels = 64;
  int n_layers = 3;
  int n_scales = 3;

  void validate() const {
    if (input_channels < 1 || base_channels < 1) {
      throw ConfigError("DiscriminatorSpec: channel counts must be >= 1");
    }
    if (n_layers < 1) throw ConfigError("DiscriminatorSpec: n_layers must be >= 1");
    if (n_scales < 1) throw ConfigError("DiscriminatorSpec: n_scales must be >= 1");
  }

  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

template <typename T>
struct ScaleResult {
  Tensor<T> logits;
  std::vector<Tensor<T>> features;
};

template <typename T>
class MultiScaleDiscriminator {
 public:
  struct Trace {
    std::vector<typename StagedNet<T>::Trace> scales;
    std::vector<LayerCache<T>> pools;
  };

  MultiScaleDiscriminator(const DiscriminatorSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec_.validate();
    for (int k = 0; k < spec_.n_scales; ++k) build_scale(k);
    InitStream init(seed);
    for (auto& s : scales_) s.initialize(init);
  }

  MultiScaleDiscriminator(MultiScaleDiscriminator&&) noexcept = default;
  MultiScaleDiscriminator& operator=(MultiScaleDiscriminator&&) noexcept = default;

  const DiscriminatorSpec& spec() const { return spec_; }
  int feature_layers() const { return spec_.n_layers + 1; }

  std::vector<ScaleResult<T>> forward(const Tensor<T>& input) const {
    check_input(input);
    std::vector<ScaleResult<T>> results;
    Tensor<T> cur = input;
    for (int k = 0; k < spec_.n_scales; ++k) {
      if (k > 0) cur = pool_.forward(cur, nullptr);
      auto outs = scales_[k].forward(cur);
      results.push_back(split(std::move(outs)));
    }
    return results;
  }

  std::vector<ScaleResult<T>> forward_traced(const Tensor<T>& input, Trace& trace) const {
    check_input(input);
    trace.scales.assign(spec_.n_scales, {});
    trace.pools.assign(spec_.n_scales, {});
    std::vector<ScaleResult<T>> results;
    Tensor<T> cur = input;
    for (int k = 0; k < spec_.n_scales; ++k) {
      if (k > 0) cur = pool_.forward(cur, &trace.pools[k]);
      scales_[k].forward_traced(cur, trace.scales[k]);
      results.push_back(split(trace.scales[k].outputs));
    }
    return results;
  }

  /// Gradients w.r.t. each scale's logits and (optionally, may be empty)
  /// intermediate features. Returns dL/d(input).
  Tensor<T> backward(const Trace& trace, const std::vector<Tensor<T>>& logit_grads,
                     const std::vector<std::vector<Tensor<T>>>& feature_grads, bool param_grads) {
    const int n = spec_.n_scales;
    if (static_cast<int>(logit_grads.size()) != n) {
      throw ShapeError("discriminator backward: expected one logit gradient per scale");
    }
    std::vector<Tensor<T>> input_grads(n);
    for (int k = n - 1; k >= 0; --k) {
      std::vector<Tensor<T>> stage_grads(scales_[k].stage_count());
      if (k < static_cast<int>(feature_grads.size())) {
        for (std::size_t i = 0; i < feature_grads[k].size(); ++i) stage_grads[i] = feature_grads[k][i];
      }
      stage_grads.back() = logit_grads[k];
      Tensor<T> g = scales_[k].backward(trace.scales[k], stage_grads, param_grads);
      if (input_grads[k].empty()) {
        input_grads[k] = std::move(g);
      } else {
        input_grads[k] += g;
      }
      if (k > 0) {
        Tensor<T> down = pool_.backward(input_grads[k], trace.pools[k], false);
        if (input_grads[k - 1].empty()) {
          input_grads[k - 1] = std::move(down);
        } else {
          input_grads[k - 1] += down;
        }
      }
    }
    return input_grads[0];
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    for (auto& s : scales_) {
      auto p = s.params();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

 private:
  void check_input(const Tensor<T>& input) const {
    if (input.channels() != spec_.input_channels) {
      throw ShapeError("discriminator expects " + std::to_string(spec_.input_channels) +
                       " input channels, got " + std::to_string(input.channels()));
    }
  }

  ScaleResult<T> split(std::vector<Tensor<T>> outs) const {
    ScaleResult<T> r;
    r.logits = std::move(outs.back());
    outs.pop_back();
    r.features = std::move(outs);
    return r;
  }

  void build_scale(int k) {
    const std::string prefix = "D.scale" + std::to_string(k);
    const int cap = spec_.base_channels * 8;
    StagedNet<T>& net = scales_.emplace_back();
    int nf = spec_.base_channels;
    {
      auto& s = net.add_stage();
      s.template add<Conv2d<T>>(prefix + ".block0.conv", spec_.input_channels, nf, 4, 2, 2);
      s.template add<LeakyReLU<T>>(T(0.2));
    }
    for (int n = 1; n <= spec_.n_layers; ++n) {
      const int prev = nf;
      nf = std::min(nf * 2, cap);
      const int stride = n < spec_.n_layers ? 2 : 1;
      const std::string name = prefix + ".block" + std::to_string(n);
      auto& s = net.add_stage();
      s.template add<Conv2d<T>>(name + ".conv", prev, nf, 4, stride, 2);
      s.template add<InstanceNorm2d<T>>(name + ".norm", nf);
      s.template add<LeakyReLU<T>>(T(0.2));
    }
    auto& head = net.add_stage();
    head.template add<Conv2d<T>>(prefix + ".head", nf, 1, 4, 1, 2);
  }

  DiscriminatorSpec spec_;
  std::vector<StagedNet<T>> scales_;
  AvgPool3x3<T> pool_;
};

/// Sketch (mapped to [-1,1]) concatenated with the photo, the discriminator's
/// conditional input.
inline Tensor<float> discriminator_input(const SketchRaster& s, const FacePhoto& p) {
  if (s.size() != p.height() || s.size() != p.width()) {
    throw ShapeError("sketch " + std::to_string(s.size()) + "x" + std::to_string(s.size()) +
                     " and photo " + std::to_string(p.height()) + "x" + std::to_string(p.width()) +
                     " are not aligned");
  }
  return concat_channels(s.to_signed(), p.pixels());
}

inline std::vector<ScaleResult<float>> discriminate(const MultiScaleDiscriminator<float>& d,
                                                    const SketchRaster& s, const FacePhoto& p) {
  return d.forward(discriminator_input(s, p));
}

}  // namespace sketchlab
