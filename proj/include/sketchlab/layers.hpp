#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sketchlab/errors.hpp"
#include "sketchlab/params.hpp"
#include "sketchlab/tensor.hpp"

namespace sketchlab {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

/// Per-call state recorded by a forward pass and consumed by the matching
/// backward pass. Layers stay immutable during forward, so one model can serve
/// several concurrent evaluations or several traced passes in one step.
template <typename T>
struct LayerCache {
  Tensor<T> input;
  Tensor<T> aux;
  std::vector<T> stats;
  std::vector<std::int32_t> indices;
  std::vector<LayerCache> children;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  /// `cache` may be null for inference-only passes.
  virtual Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const = 0;

  /// Returns dL/dx. When `param_grads` is set, parameter gradients are
  /// accumulated into each Param::grad.
  virtual Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool param_grads) = 0;

  virtual void collect(ParamRefs<T>&) {}
  virtual void initialize(InitStream&) {}
  virtual std::string kind() const = 0;
};

namespace detail {

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) {
    throw ShapeError("convolution input of size " + std::to_string(in) +
                     " too small for kernel " + std::to_string(kernel));
  }
  return span / stride + 1;
}

/// Unfolds (C, H, W) into a (C*k*k, Ho*Wo) matrix with zero padding.
template <typename T>
void im2col(const T* x, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* cols) {
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(c) * kernel + ki) * kernel + kj) * out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters columns back, accumulating into `x`.
template <typename T>
void col2im(const T* cols, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* x) {
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        const T* row =
            cols + ((static_cast<std::size_t>(c) * kernel + ki) * kernel + kj) * out_plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= height) continue;
          const T* src = row + static_cast<std::size_t>(oy) * out_w;
          T* dst = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

inline int reflect_index(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace detail

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  using RowMatrix = typename Tensor<T>::RowMatrix;

  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
         int pad, bool with_bias = true)
      : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
        bias(with_bias ? Param<T>(name + ".bias", {out_channels}) : Param<T>{}),
        in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        stride_(stride),
        pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (x.channels() != in_) {
      throw ShapeError("Conv2d " + weight.name + ": expected " + std::to_string(in_) +
                       " input channels, got " + std::to_string(x.channels()));
    }
    const int oh = detail::conv_out_size(x.height(), kernel_, stride_, pad_);
    const int ow = detail::conv_out_size(x.width(), kernel_, stride_, pad_);
    Tensor<T> y(out_, oh, ow);
    const RowMatrix cols = unfold(x, oh, ow);
    y.matrix().noalias() = weight_matrix() * cols;
    if (!bias.value.empty()) {
      for (int c = 0; c < out_; ++c) {
        T* p = y.channel(c);
        const T b = bias.value[c];
        for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += b;
      }
    }
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool param_grads) override {
    const Tensor<T>& x = cache.input;
    const int oh = dy.height();
    const int ow = dy.width();
    const auto dy_mat = dy.matrix();
    if (param_grads) {
      const RowMatrix cols = unfold(x, oh, ow);
      Eigen::Map<RowMatrix> dw(weight.grad.data(), out_, in_ * kernel_ * kernel_);
      dw.noalias() += dy_mat * cols.transpose();
      if (!bias.value.empty()) {
        for (int c = 0; c < out_; ++c) bias.grad[c] += dy_mat.row(c).sum();
      }
    }
    const RowMatrix dcols = weight_matrix().transpose() * dy_mat;
    Tensor<T> dx(x.shape());
    detail::col2im(dcols.data(), in_, x.height(), x.width(), kernel_, stride_, pad_, oh, ow,
                   dx.data());
    return dx;
  }

  void collect(ParamRefs<T>& out) override {
    out.push_back(&weight);
    if (!bias.value.empty()) out.push_back(&bias);
  }

  void initialize(InitStream& init) override {
    init.normal(weight, 0.0, kInitStd);
    std::fill(bias.value.begin(), bias.value.end(), T{0});
  }

  std::string kind() const override { return "conv"; }

  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

  Param<T> weight;
  Param<T> bias;

 private:
  Eigen::Map<const RowMatrix> weight_matrix() const {
    return Eigen::Map<const RowMatrix>(weight.value.data(), out_, in_ * kernel_ * kernel_);
  }

  RowMatrix unfold(const Tensor<T>& x, int oh, int ow) const {
    RowMatrix cols(static_cast<Eigen::Index>(in_) * kernel_ * kernel_,
                   static_cast<Eigen::Index>(oh) * ow);
    detail::im2col(x.data(), in_, x.height(), x.width(), kernel_, stride_, pad_, oh, ow,
                   cols.data());
    return cols;
  }

  int in_, out_, kernel_, stride_, pad_;
};

/// Fractionally strided convolution; weight layout (in, out, k, k).
template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  using RowMatrix = typename Tensor<T>::RowMatrix;

  ConvTranspose2d(const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride, int pad, int output_pad)
      : weight(name + ".weight", {in_channels, out_channels, kernel, kernel}),
        bias(name + ".bias", {out_channels}),
        in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        output_pad_(output_pad) {}

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (x.channels() != in_) {
      throw ShapeError("ConvTranspose2d " + weight.name + ": channel mismatch");
    }
    const int oh = (x.height() - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
    const int ow = (x.width() - 1) * stride_ - 2 * pad_ + kernel_ + output_pad_;
    const RowMatrix cols = weight_matrix().transpose() * x.matrix();
    Tensor<T> y(out_, oh, ow);
    detail::col2im(cols.data(), out_, oh, ow, kernel_, stride_, pad_, x.height(), x.width(),
                   y.data());
    for (int c = 0; c < out_; ++c) {
      T* p = y.channel(c);
      const T b = bias.value[c];
      for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += b;
    }
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool param_grads) override {
    const Tensor<T>& x = cache.input;
    RowMatrix dcols(static_cast<Eigen::Index>(out_) * kernel_ * kernel_,
                    static_cast<Eigen::Index>(x.shape().plane()));
    detail::im2col(dy.data(), out_, dy.height(), dy.width(), kernel_, stride_, pad_, x.height(),
                   x.width(), dcols.data());
    if (param_grads) {
      Eigen::Map<RowMatrix> dw(weight.grad.data(), in_, out_ * kernel_ * kernel_);
      dw.noalias() += x.matrix() * dcols.transpose();
      const auto dy_mat = dy.matrix();
      for (int c = 0; c < out_; ++c) bias.grad[c] += dy_mat.row(c).sum();
    }
    Tensor<T> dx(x.shape());
    dx.matrix().noalias() = weight_matrix() * dcols;
    return dx;
  }

  void collect(ParamRefs<T>& out) override {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  void initialize(InitStream& init) override {
    init.normal(weight, 0.0, kInitStd);
    std::fill(bias.value.begin(), bias.value.end(), T{0});
  }

  std::string kind() const override { return "conv_transpose"; }

  Param<T> weight;
  Param<T> bias;

 private:
  Eigen::Map<const RowMatrix> weight_matrix() const {
    return Eigen::Map<const RowMatrix>(weight.value.data(), in_, out_ * kernel_ * kernel_);
  }

  int in_, out_, kernel_, stride_, pad_, output_pad_;
};

/// Result of standardizing one channel: normalized values and 1/sqrt(var+eps).
struct ChannelStats {
  double mean = 0.0;
  double inv_std = 0.0;
};

/// Per-channel standardization over spatial positions. Statistics are
/// accumulated in double relative to the first element so that a constant
/// channel maps to exact zeros.
template <typename T>
ChannelStats standardize_channel(const T* x, T* out, std::size_t n, double eps) {
  const double pivot = static_cast<double>(x[0]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(x[i]) - pivot;
  if (!std::isfinite(sum)) {
    throw ValidationError("instance normalization received non-finite activations");
  }
  const double shift = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (static_cast<double>(x[i]) - pivot) - shift;
    sq += d * d;
  }
  const double var = sq / static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<T>(((static_cast<double>(x[i]) - pivot) - shift) * inv);
  }
  return {pivot + shift, inv};
}

template <typename T>
class InstanceNorm2d final : public Layer<T> {
 public:
  InstanceNorm2d(const std::string& name, int channels, double eps = kNormEps)
      : scale(name + ".scale", {channels}, T{1}),
        shift(name + ".shift", {channels}, T{0}),
        channels_(channels),
        eps_(eps) {}

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (x.channels() != channels_) throw ShapeError("InstanceNorm2d: channel mismatch");
    const std::size_t n = x.shape().plane();
    Tensor<T> xhat(x.shape());
    std::vector<T> inv(channels_);
    for (int c = 0; c < channels_; ++c) {
      inv[c] = static_cast<T>(standardize_channel(x.channel(c), xhat.channel(c), n, eps_).inv_std);
    }
    Tensor<T> y(x.shape());
    for (int c = 0; c < channels_; ++c) {
      const T g = scale.value[c];
      const T b = shift.value[c];
      const T* src = xhat.channel(c);
      T* dst = y.channel(c);
      for (std::size_t i = 0; i < n; ++i) dst[i] = g * src[i] + b;
    }
    if (cache) {
      cache->aux = std::move(xhat);
      cache->stats = std::move(inv);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool param_grads) override {
    const Tensor<T>& xhat = cache.aux;
    const std::size_t n = xhat.shape().plane();
    Tensor<T> dx(xhat.shape());
    for (int c = 0; c < channels_; ++c) {
      const T* g = dy.channel(c);
      const T* h = xhat.channel(c);
      double sum_g = 0.0;
      double sum_gh = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += g[i];
        sum_gh += static_cast<double>(g[i]) * h[i];
      }
      if (param_grads) {
        scale.grad[c] += static_cast<T>(sum_gh);
        shift.grad[c] += static_cast<T>(sum_g);
      }
      const double gamma = scale.value[c];
      const double inv = cache.stats[c];
      const double mean_g = sum_g / static_cast<double>(n);
      const double mean_gh = sum_gh / static_cast<double>(n);
      T* out = dx.channel(c);
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<T>(gamma * inv * (g[i] - mean_g - h[i] * mean_gh));
      }
    }
    return dx;
  }

  void collect(ParamRefs<T>& out) override {
    out.push_back(&scale);
    out.push_back(&shift);
  }

  void initialize(InitStream&) override {
    std::fill(scale.value.begin(), scale.value.end(), T{1});
    std::fill(shift.value.begin(), shift.value.end(), T{0});
  }

  std::string kind() const override { return "instance_norm"; }

  Param<T> scale;
  Param<T> shift;

 private:
  int channels_;
  double eps_;
};

template <typename T>
class LeakyReLU final : public Layer<T> {
 public:
  explicit LeakyReLU(T slope = T{0}) : slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    Tensor<T> y(x.shape());
    const T* src = x.data();
    T* dst = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : slope_ * src[i];
    if (cache) cache->input = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    Tensor<T> dx(dy.shape());
    const T* x = cache.input.data();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      dx.data()[i] = x[i] > T{0} ? dy.data()[i] : slope_ * dy.data()[i];
    }
    return dx;
  }

  std::string kind() const override { return slope_ == T{0} ? "relu" : "leaky_relu"; }

 private:
  T slope_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = std::tanh(x.data()[i]);
    if (cache) cache->aux = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    Tensor<T> dx(dy.shape());
    const T* y = cache.aux.data();
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data()[i] = dy.data()[i] * (T{1} - y[i] * y[i]);
    return dx;
  }

  std::string kind() const override { return "tanh"; }
};

template <typename T>
class ReflectionPad2d final : public Layer<T> {
 public:
  explicit ReflectionPad2d(int pad) : pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (pad_ >= x.height() || pad_ >= x.width()) {
      throw ShapeError("ReflectionPad2d: padding " + std::to_string(pad_) +
                       " too large for input " + to_string(x.shape()));
    }
    const int h = x.height() + 2 * pad_;
    const int w = x.width() + 2 * pad_;
    Tensor<T> y(x.channels(), h, w);
    for (int c = 0; c < x.channels(); ++c) {
      for (int yy = 0; yy < h; ++yy) {
        const int sy = detail::reflect_index(yy - pad_, x.height());
        for (int xx = 0; xx < w; ++xx) {
          y(c, yy, xx) = x(c, sy, detail::reflect_index(xx - pad_, x.width()));
        }
      }
    }
    if (cache) cache->input = Tensor<T>(x.shape());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    const Shape s = cache.input.shape();
    Tensor<T> dx(s);
    for (int c = 0; c < s.channels; ++c) {
      for (int yy = 0; yy < dy.height(); ++yy) {
        const int sy = detail::reflect_index(yy - pad_, s.height);
        for (int xx = 0; xx < dy.width(); ++xx) {
          dx(c, sy, detail::reflect_index(xx - pad_, s.width)) += dy(c, yy, xx);
        }
      }
    }
    return dx;
  }

  std::string kind() const override { return "reflection_pad"; }

 private:
  int pad_;
};

/// 3x3, stride 2, padding 1 average pooling that excludes padded cells from
/// the divisor. Used to build the discriminator's input pyramid.
template <typename T>
class AvgPool3x3 final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    const int oh = detail::conv_out_size(x.height(), 3, 2, 1);
    const int ow = detail::conv_out_size(x.width(), 3, 2, 1);
    Tensor<T> y(x.channels(), oh, ow);
    for (int c = 0; c < x.channels(); ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T acc = 0;
          int count = 0;
          for_window(oy, ox, x.height(), x.width(), [&](int iy, int ix) {
            acc += x(c, iy, ix);
            ++count;
          });
          y(c, oy, ox) = acc / static_cast<T>(count);
        }
      }
    }
    if (cache) cache->input = Tensor<T>(x.shape());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    const Shape s = cache.input.shape();
    Tensor<T> dx(s);
    for (int c = 0; c < s.channels; ++c) {
      for (int oy = 0; oy < dy.height(); ++oy) {
        for (int ox = 0; ox < dy.width(); ++ox) {
          int count = 0;
          for_window(oy, ox, s.height, s.width, [&](int, int) { ++count; });
          const T g = dy(c, oy, ox) / static_cast<T>(count);
          for_window(oy, ox, s.height, s.width, [&](int iy, int ix) { dx(c, iy, ix) += g; });
        }
      }
    }
    return dx;
  }

  std::string kind() const override { return "avg_pool"; }

 private:
  template <typename F>
  static void for_window(int oy, int ox, int h, int w, F&& f) {
    for (int ky = 0; ky < 3; ++ky) {
      const int iy = oy * 2 - 1 + ky;
      if (iy < 0 || iy >= h) continue;
      for (int kx = 0; kx < 3; ++kx) {
        const int ix = ox * 2 - 1 + kx;
        if (ix >= 0 && ix < w) f(iy, ix);
      }
    }
  }
};

/// 2x2, stride 2 max pooling with ceil-mode output size.
template <typename T>
class MaxPool2x2 final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    const int oh = (x.height() + 1) / 2;
    const int ow = (x.width() + 1) / 2;
    Tensor<T> y(x.channels(), oh, ow);
    std::vector<std::int32_t> arg(y.size());
    std::size_t k = 0;
    for (int c = 0; c < x.channels(); ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++k) {
          std::int32_t best = -1;
          T best_v = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int iy = 2 * oy + dy;
              const int ix = 2 * ox + dx;
              if (iy >= x.height() || ix >= x.width()) continue;
              const T v = x(c, iy, ix);
              if (best < 0 || v > best_v) {
                best_v = v;
                best = iy * x.width() + ix;
              }
            }
          }
          y.data()[k] = best_v;
          arg[k] = best;
        }
      }
    }
    if (cache) {
      cache->input = Tensor<T>(x.shape());
      cache->indices = std::move(arg);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool) override {
    const Shape s = cache.input.shape();
    Tensor<T> dx(s);
    const std::size_t out_plane = dy.shape().plane();
    for (int c = 0; c < s.channels; ++c) {
      T* plane = dx.channel(c);
      for (std::size_t i = 0; i < out_plane; ++i) {
        const std::size_t k = static_cast<std::size_t>(c) * out_plane + i;
        plane[cache.indices[k]] += dy.data()[k];
      }
    }
    return dx;
  }

  std::string kind() const override { return "max_pool"; }
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (cache) cache->children.assign(layers_.size(), LayerCache<T>{});
    Tensor<T> cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      cur = layers_[i]->forward(cur, cache ? &cache->children[i] : nullptr);
    }
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool param_grads) override {
    Tensor<T> g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      g = layers_[i]->backward(g, cache.children[i], param_grads);
    }
    return g;
  }

  void collect(ParamRefs<T>& out) override {
    for (auto& l : layers_) l->collect(out);
  }

  void initialize(InitStream& init) override {
    for (auto& l : layers_) l->initialize(init);
  }

  std::string kind() const override { return "sequential"; }

  bool contains(const std::string& kind) const {
    for (const auto& l : layers_) {
      if (l->kind() == kind) return true;
      if (auto* s = dynamic_cast<const Sequential*>(l.get()); s && s->contains(kind)) return true;
    }
    return false;
  }

  std::size_t size() const { return layers_.size(); }
  const Layer<T>& at(std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// x + body(x).
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  explicit ResidualBlock(Sequential<T> body) : body_(std::move(body)) {}

  Tensor<T> forward(const Tensor<T>& x, LayerCache<T>* cache) const override {
    if (cache) cache->children.assign(1, LayerCache<T>{});
    Tensor<T> y = body_.forward(x, cache ? &cache->children[0] : nullptr);
    y += x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const LayerCache<T>& cache, bool param_grads) override {
    Tensor<T> dx = body_.backward(dy, cache.children[0], param_grads);
    dx += dy;
    return dx;
  }

  void collect(ParamRefs<T>& out) override { body_.collect(out); }
  void initialize(InitStream& init) override { body_.initialize(init); }
  std::string kind() const override { return "residual"; }

  const Sequential<T>& body() const { return body_; }

 private:
  Sequential<T> body_;
};

/// A chain of stages whose intermediate outputs are individually observable
/// (generator layers L0..L4, discriminator blocks, perceptual slices).
template <typename T>
class StagedNet {
 public:
  struct Trace {
    std::vector<LayerCache<T>> caches;
    std::vector<Tensor<T>> outputs;
  };

  Sequential<T>& add_stage() { return stages_.emplace_back(); }
  std::size_t stage_count() const { return stages_.size(); }
  const Sequential<T>& stage(std::size_t i) const { return stages_[i]; }

  /// Outputs of stages [0, count).
  std::vector<Tensor<T>> forward(const Tensor<T>& x, std::size_t count) const {
    std::vector<Tensor<T>> outs;
    outs.reserve(count);
    const Tensor<T>* cur = &x;
    for (std::size_t i = 0; i < count; ++i) {
      outs.push_back(stages_[i].forward(*cur, nullptr));
      cur = &outs.back();
    }
    return outs;
  }

  std::vector<Tensor<T>> forward(const Tensor<T>& x) const { return forward(x, stages_.size()); }

  Tensor<T> forward_final(const Tensor<T>& x) const {
    Tensor<T> cur = x;
    for (const auto& s : stages_) cur = s.forward(cur, nullptr);
    return cur;
  }

  void forward_traced(const Tensor<T>& x, Trace& trace) const {
    trace.caches.assign(stages_.size(), LayerCache<T>{});
    trace.outputs.clear();
    trace.outputs.reserve(stages_.size());
    const Tensor<T>* cur = &x;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      trace.outputs.push_back(stages_[i].forward(*cur, &trace.caches[i]));
      cur = &trace.outputs.back();
    }
  }

  /// `stage_grads[i]` is dL/d(output of stage i); empty tensors mean no
  /// direct contribution at that stage. Returns dL/dx.
  Tensor<T> backward(const Trace& trace, const std::vector<Tensor<T>>& stage_grads,
                     bool param_grads) {
    Tensor<T> g;
    for (std::size_t i = stages_.size(); i-- > 0;) {
      if (i < stage_grads.size() && !stage_grads[i].empty()) {
        if (g.empty()) {
          g = stage_grads[i];
        } else {
          g += stage_grads[i];
        }
      }
      if (g.empty()) continue;
      g = stages_[i].backward(g, trace.caches[i], param_grads);
    }
    if (g.empty()) throw ValidationError("StagedNet::backward: no gradient supplied");
    return g;
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    for (auto& s : stages_) s.collect(out);
    return out;
  }

  void initialize(InitStream& init) {
    for (auto& s : stages_) s.initialize(init);
  }

 private:
  std::vector<Sequential<T>> stages_;
};

}  // namespace sketchlab

namespace sketchlab {

/// Standalone instance normalization of one sample. `scale`/`shift` are
/// optional per-channel affine parameters applied after standardization.
template <typename T>
Tensor<T> instance_normalize(const Tensor<T>& x, double eps = kNormEps,
                             std::span<const T> scale = {}, std::span<const T> shift = {}) {
  if (!(eps > 0.0)) throw ConfigError("instance_normalize: eps must be positive");
  if (!x.all_finite()) {
    throw ValidationError("instance_normalize: input contains non-finite values");
  }
  const auto channels = static_cast<std::size_t>(x.channels());
  if ((!scale.empty() && scale.size() != channels) || (!shift.empty() && shift.size() != channels)) {
    throw ShapeError("instance_normalize: affine parameter count does not match channels");
  }
  Tensor<T> y(x.shape());
  const std::size_t n = x.shape().plane();
  for (int c = 0; c < x.channels(); ++c) {
    standardize_channel(x.channel(c), y.channel(c), n, eps);
    if (scale.empty() && shift.empty()) continue;
    const T g = scale.empty() ? T{1} : scale[c];
    const T b = shift.empty() ? T{0} : shift[c];
    T* p = y.channel(c);
    for (std::size_t i = 0; i < n; ++i) p[i] = g * p[i] + b;
  }
  return y;
}

}  // namespace sketchlab
