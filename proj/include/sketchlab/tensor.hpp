#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sketchlab/errors.hpp"

namespace sketchlab {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t numel() const { return plane() * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

/// Dense single-sample activation tensor laid out channel-major (C, H, W).
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T{0})
      : Tensor(Shape{channels, height, width}, fill) {}
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape) {
    if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
      throw ShapeError("negative tensor dimension: " + to_string(shape));
    }
    data_.assign(shape.numel(), fill);
  }

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }
  const T* channel(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * shape_.plane();
  }

  T& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }
  const T& operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }

  /// (C, H*W) row-major view used for the GEMM-based layers.
  MatrixMap matrix() {
    return MatrixMap(data_.data(), shape_.channels, static_cast<Eigen::Index>(shape_.plane()));
  }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), shape_.channels,
                          static_cast<Eigen::Index>(shape_.plane()));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  void require_same_shape(const Tensor& o, const char* what) const {
    if (!(shape_ == o.shape_)) {
      throw ShapeError(std::string(what) + ": shape mismatch " + to_string(shape_) + " vs " +
                       to_string(o.shape_));
    }
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_{};
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor<T> out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

/// Channels [first, first + count) of `t`.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.channels()) {
    throw RangeError("slice_channels: range out of bounds");
  }
  Tensor<T> out(count, t.height(), t.width());
  std::copy(t.channel(first), t.channel(first) + out.size(), out.data());
  return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace sketchlab
