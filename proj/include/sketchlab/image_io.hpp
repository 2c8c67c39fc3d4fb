#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <png.h>

#include "sketchlab/errors.hpp"
#include "sketchlab/raster.hpp"
#include "sketchlab/tensor.hpp"

namespace sketchlab {

using ByteBuffer = std::vector<std::uint8_t>;

/// 8-bit image in interleaved layout (1 or 3 channels).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  ByteBuffer pixels;
};

namespace detail {

inline Image8 decode_png(const void* data, std::size_t size, int channels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data, size)) {
    throw ValidationError(std::string("undecodable PNG: ") + image.message);
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ValidationError(std::string("undecodable PNG: ") + image.message);
  }
  return out;
}

inline ByteBuffer encode_png(const Image8& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + image.message);
  }
  ByteBuffer out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

inline ByteBuffer read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  return ByteBuffer(std::istreambuf_iterator<char>(is), {});
}

inline void write_file(const std::filesystem::path& path, const ByteBuffer& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace detail

/// Grayscale tensor in [0,1] (1, H, W).
inline Tensor<float> gray_from_png(const ByteBuffer& bytes) {
  const Image8 img = detail::decode_png(bytes.data(), bytes.size(), 1);
  Tensor<float> t(1, img.height, img.width);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  return t;
}

/// RGB tensor in [-1,1] (3, H, W).
inline Tensor<float> rgb_from_png(const ByteBuffer& bytes) {
  const Image8 img = detail::decode_png(bytes.data(), bytes.size(), 3);
  Tensor<float> t(3, img.height, img.width);
  const std::size_t plane = t.shape().plane();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      t.data()[c * plane + i] = static_cast<float>(img.pixels[i * 3 + c]) / 127.5f - 1.0f;
    }
  }
  return t;
}

inline ByteBuffer png_from_gray(const Tensor<float>& t) {
  Image8 img{t.width(), t.height(), 1, ByteBuffer(t.shape().plane())};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = detail::to_byte(t.data()[i] * 255.0);
  return detail::encode_png(img);
}

inline ByteBuffer png_from_rgb(const Tensor<float>& t) {
  if (t.channels() != 3) throw ShapeError("png_from_rgb: expected 3 channels");
  const std::size_t plane = t.shape().plane();
  Image8 img{t.width(), t.height(), 3, ByteBuffer(plane * 3)};
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      img.pixels[i * 3 + c] = detail::to_byte((t.data()[c * plane + i] + 1.0) * 127.5);
    }
  }
  return detail::encode_png(img);
}

inline SketchRaster read_sketch_png(const std::filesystem::path& path) {
  return SketchRaster(gray_from_png(detail::read_file(path)));
}

inline void write_sketch_png(const std::filesystem::path& path, const SketchRaster& s) {
  detail::write_file(path, png_from_gray(s.pixels()));
}

inline FacePhoto read_photo_png(const std::filesystem::path& path) {
  return FacePhoto(rgb_from_png(detail::read_file(path)));
}

inline void write_photo_png(const std::filesystem::path& path, const FacePhoto& p) {
  detail::write_file(path, png_from_rgb(p.pixels()));
}

/// Reads only the PNG header.
inline std::pair<int, int> png_dimensions(const std::filesystem::path& path) {
  const ByteBuffer bytes = detail::read_file(path);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ValidationError("undecodable PNG " + path.string());
  }
  const std::pair<int, int> dims{static_cast<int>(image.width), static_cast<int>(image.height)};
  png_image_free(&image);
  return dims;
}

/// Bilinear resampling with half-pixel centers.
inline Tensor<float> resize_bilinear(const Tensor<float>& t, int out_h, int out_w) {
  if (t.height() == out_h && t.width() == out_w) return t;
  Tensor<float> out(t.channels(), out_h, out_w);
  const double sy = static_cast<double>(t.height()) / out_h;
  const double sx = static_cast<double>(t.width()) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, t.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, t.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, t.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, t.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < t.channels(); ++c) {
        const double top = t(c, y0, x0) * (1 - wx) + t(c, y0, x1) * wx;
        const double bottom = t(c, y1, x0) * (1 - wx) + t(c, y1, x1) * wx;
        out(c, y, x) = static_cast<float>(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

}  // namespace sketchlab
