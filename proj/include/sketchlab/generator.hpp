#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sketchlab/errors.hpp"
#include "sketchlab/layers.hpp"
#include "sketchlab/raster.hpp"

namespace sketchlab {

/// Shape of the encoder / residual-trunk / decoder generator.
///
/// Encoder layer L_i (i = 0..n_downsample) has base_channels * 2^i channels
/// and a stride of 2^i relative to the input. The first `norm_free_prefix`
/// encoder layers carry no instance normalization: 0 is the unmodified
/// baseline, 2 drops it from L0 and L1, and n_downsample + 1 drops it from
/// the whole encoder.
struct GeneratorSpec {
  int base_channels = 48;
  int n_downsample = 4;
  int n_resblocks = 9;
  int norm_free_prefix = 2;
  int input_channels = 1;
  int output_channels = 3;

  int encoder_layers() const { return n_downsample + 1; }
  int layer_channels(int layer) const { return base_channels << layer; }
  int layer_stride(int layer) const { return 1 << layer; }
  int size_multiple() const { return 1 << n_downsample; }

  void validate() const {
    if (base_channels < 1) throw ConfigError("GeneratorSpec: base_channels must be >= 1");
    if (n_downsample < 0 || n_downsample > 8) {
      throw ConfigError("GeneratorSpec: n_downsample must be in 0..8");
    }
    if (n_resblocks < 0) throw ConfigError("GeneratorSpec: n_resblocks must be >= 0");
    if (norm_free_prefix < 0 || norm_free_prefix > n_downsample + 1) {
      throw ConfigError("GeneratorSpec: norm_free_prefix " + std::to_string(norm_free_prefix) +
                        " outside 0.." + std::to_string(n_downsample + 1));
    }
    if (input_channels < 1 || output_channels < 1) {
      throw ConfigError("GeneratorSpec: channel counts must be >= 1");
    }
  }

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Stage layout: stages 0..n_downsample are the encoder layers L0..Ln, the
/// next stage is the residual trunk, the last stage is the decoder (transposed
/// convolutions followed by the 7x7 output convolution and tanh).
template <typename T>
class Generator {
 public:
  using Trace = typename StagedNet<T>::Trace;

  Generator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
    spec_.validate();
    build();
    InitStream init(seed);
    net_.initialize(init);
  }

  Generator(Generator&&) noexcept = default;
  Generator& operator=(Generator&&) noexcept = default;

  const GeneratorSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  bool layer_normalized(int layer) const {
    check_layer(layer);
    return net_.stage(static_cast<std::size_t>(layer)).contains("instance_norm");
  }

  /// Maps a [-1,1] input tensor to a [-1,1] image of identical spatial size.
  Tensor<T> forward(const Tensor<T>& x) const {
    check_input(x);
    return net_.forward_final(x);
  }

  /// Post-activation outputs of L0..L_last.
  std::vector<Tensor<T>> encoder_features(const Tensor<T>& x, int last_layer) const {
    check_layer(last_layer);
    check_input(x);
    return net_.forward(x, static_cast<std::size_t>(last_layer) + 1);
  }

  Tensor<T> forward_traced(const Tensor<T>& x, Trace& trace) const {
    check_input(x);
    net_.forward_traced(x, trace);
    return trace.outputs.back();
  }

  /// Backpropagates dL/d(output) and accumulates parameter gradients.
  Tensor<T> backward(const Trace& trace, const Tensor<T>& grad_output) {
    std::vector<Tensor<T>> grads(net_.stage_count());
    grads.back() = grad_output;
    return net_.backward(trace, grads, true);
  }

  ParamRefs<T> params() { return net_.params(); }

  void check_input(const Tensor<T>& x) const {
    if (x.channels() != spec_.input_channels) {
      throw ShapeError("generator expects " + std::to_string(spec_.input_channels) +
                       " input channel(s), got " + std::to_string(x.channels()));
    }
    const int m = spec_.size_multiple();
    if (x.height() % m != 0 || x.width() % m != 0 || x.height() == 0 || x.width() == 0) {
      throw ShapeError("generator input " + std::to_string(x.height()) + "x" +
                       std::to_string(x.width()) + " is not divisible by " + std::to_string(m));
    }
  }

 private:
  void check_layer(int layer) const {
    if (layer < 0 || layer > spec_.n_downsample) {
      throw RangeError("layer index " + std::to_string(layer) + " outside 0.." +
                       std::to_string(spec_.n_downsample));
    }
  }

  void build() {
    const int ngf = spec_.base_channels;
    for (int i = 0; i <= spec_.n_downsample; ++i) {
      const std::string name = "G.enc" + std::to_string(i);
      auto& stage = net_.add_stage();
      const int out_c = spec_.layer_channels(i);
      if (i == 0) {
        stage.template add<ReflectionPad2d<T>>(3);
        stage.template add<Conv2d<T>>(name + ".conv", spec_.input_channels, out_c, 7, 1, 0);
      } else {
        stage.template add<Conv2d<T>>(name + ".conv", spec_.layer_channels(i - 1), out_c, 3, 2, 1);
      }
      if (i >= spec_.norm_free_prefix) stage.template add<InstanceNorm2d<T>>(name + ".norm", out_c);
      stage.template add<LeakyReLU<T>>();
    }

    const int trunk_c = spec_.layer_channels(spec_.n_downsample);
    auto& trunk = net_.add_stage();
    for (int r = 0; r < spec_.n_resblocks; ++r) {
      const std::string name = "G.res" + std::to_string(r);
      Sequential<T> body;
      body.template add<ReflectionPad2d<T>>(1);
      body.template add<Conv2d<T>>(name + ".conv1", trunk_c, trunk_c, 3, 1, 0);
      body.template add<InstanceNorm2d<T>>(name + ".norm1", trunk_c);
      body.template add<LeakyReLU<T>>();
      body.template add<ReflectionPad2d<T>>(1);
      body.template add<Conv2d<T>>(name + ".conv2", trunk_c, trunk_c, 3, 1, 0);
      body.template add<InstanceNorm2d<T>>(name + ".norm2", trunk_c);
      trunk.template add<ResidualBlock<T>>(std::move(body));
    }

    auto& decoder = net_.add_stage();
    for (int i = spec_.n_downsample; i > 0; --i) {
      const std::string name = "G.dec" + std::to_string(spec_.n_downsample - i);
      const int in_c = spec_.layer_channels(i);
      const int out_c = spec_.layer_channels(i - 1);
      decoder.template add<ConvTranspose2d<T>>(name + ".deconv", in_c, out_c, 3, 2, 1, 1);
      decoder.template add<InstanceNorm2d<T>>(name + ".norm", out_c);
      decoder.template add<LeakyReLU<T>>();
    }
    decoder.template add<ReflectionPad2d<T>>(3);
    decoder.template add<Conv2d<T>>("G.out.conv", ngf, spec_.output_channels, 7, 1, 0);
    decoder.template add<Tanh<T>>();
  }

  GeneratorSpec spec_;
  std::uint64_t seed_;
  StagedNet<T> net_;
};

/// Post-activation output of encoder layer L_i for one sketch.
struct FeatureMap {
  int layer_index = 0;
  int stride_to_input = 1;
  Tensor<float> values;

  int channels() const { return values.channels(); }
};

using ProbeVector = std::vector<float>;

inline FacePhoto generator_forward(const Generator<float>& g, const SketchRaster& s) {
  Tensor<float> out = g.forward(s.to_signed());
  // tanh can round to exactly +-1 but never past it; clamp guards the
  // FacePhoto invariant against platform tanh implementations.
  for (auto& v : out.values()) v = std::clamp(v, -1.0f, 1.0f);
  return FacePhoto(std::move(out));
}

/// All encoder feature maps L0..last_layer from a single pass.
inline std::vector<FeatureMap> extract_feature_stack(const Generator<float>& g,
                                                     const SketchRaster& s, int last_layer) {
  auto outs = g.encoder_features(s.to_signed(), last_layer);
  std::vector<FeatureMap> maps;
  maps.reserve(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const int layer = static_cast<int>(i);
    maps.push_back({layer, g.spec().layer_stride(layer), std::move(outs[i])});
  }
  return maps;
}

inline FeatureMap extract_features(const Generator<float>& g, const SketchRaster& s,
                                   int layer_index) {
  auto maps = extract_feature_stack(g, s, layer_index);
  return std::move(maps.back());
}

struct PixelPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Feature-map cell that covers input pixel `p`.
inline PixelPoint feature_coords(const FeatureMap& fm, PixelPoint p) {
  return {p.x / fm.stride_to_input, p.y / fm.stride_to_input};
}

inline ProbeVector probe_vector(const FeatureMap& fm, PixelPoint input_point) {
  const int input_h = fm.values.height() * fm.stride_to_input;
  const int input_w = fm.values.width() * fm.stride_to_input;
  if (input_point.x < 0 || input_point.y < 0 || input_point.x >= input_w ||
      input_point.y >= input_h) {
    throw RangeError("probe point (" + std::to_string(input_point.x) + "," +
                     std::to_string(input_point.y) + ") outside " + std::to_string(input_w) +
                     "x" + std::to_string(input_h) + " input");
  }
  const PixelPoint f = feature_coords(fm, input_point);
  ProbeVector v(static_cast<std::size_t>(fm.channels()));
  for (int c = 0; c < fm.channels(); ++c) v[c] = fm.values(c, f.y, f.x);
  return v;
}

}  // namespace sketchlab
