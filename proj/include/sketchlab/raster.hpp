#pragma once

#include <algorithm>
#include <string>

#include "sketchlab/errors.hpp"
#include "sketchlab/tensor.hpp"

namespace sketchlab {

inline constexpr int kDefaultResolution = 512;

/// Single-channel contour drawing. 1 is white background, 0 a black stroke.
class SketchRaster {
 public:
  SketchRaster() = default;

  /// Blank white canvas.
  explicit SketchRaster(int size) : pixels_(1, size, size, 1.0f) {
    if (size <= 0) throw ShapeError("SketchRaster: size must be positive");
  }

  explicit SketchRaster(Tensor<float> pixels) : pixels_(std::move(pixels)) {
    if (pixels_.channels() != 1) throw ShapeError("SketchRaster: expected one channel");
    if (pixels_.height() != pixels_.width()) {
      throw ShapeError("SketchRaster: expected a square raster, got " + to_string(pixels_.shape()));
    }
    for (float v : pixels_.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw ValidationError("SketchRaster: pixel value outside [0,1]");
      }
    }
  }

  int size() const { return pixels_.height(); }
  const Tensor<float>& pixels() const { return pixels_; }

  float at(int x, int y) const { return pixels_(0, y, x); }
  void set(int x, int y, float v) { pixels_(0, y, x) = v; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < size() && y < size(); }
  bool is_stroke(int x, int y) const { return pixels_(0, y, x) < 0.5f; }

  std::size_t stroke_count() const {
    return static_cast<std::size_t>(
        std::count_if(pixels_.values().begin(), pixels_.values().end(),
                      [](float v) { return v < 0.5f; }));
  }

  /// Generator input: the raster remapped from [0,1] to [-1,1].
  Tensor<float> to_signed() const {
    Tensor<float> t(pixels_.shape());
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = pixels_.data()[i] * 2.0f - 1.0f;
    return t;
  }

  friend bool operator==(const SketchRaster&, const SketchRaster&) = default;

 private:
  Tensor<float> pixels_;
};

/// RGB image with values in [-1,1].
class FacePhoto {
 public:
  FacePhoto() = default;

  explicit FacePhoto(Tensor<float> pixels) : pixels_(std::move(pixels)) {
    if (pixels_.channels() != 3) {
      throw ShapeError("FacePhoto: expected 3 channels, got " + std::to_string(pixels_.channels()));
    }
    for (float v : pixels_.values()) {
      if (!(v >= -1.0f && v <= 1.0f)) throw ValidationError("FacePhoto: value outside [-1,1]");
    }
  }

  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  const Tensor<float>& pixels() const { return pixels_; }

  friend bool operator==(const FacePhoto&, const FacePhoto&) = default;

 private:
  Tensor<float> pixels_;
};

}  // namespace sketchlab
