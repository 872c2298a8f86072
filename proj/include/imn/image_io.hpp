#pragma once

// 8-bit RGB PNG input/output and conversion to [0, 1] tensors.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "imn/tensor.hpp"

namespace imn {

/// Interleaved 8-bit RGB raster.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  friend bool operator==(const Image8&, const Image8&) = default;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Decodes any PNG to 8-bit RGB (palette and grey are expanded, alpha and 16-bit depth stripped).
inline Image8 load_png(const std::filesystem::path& path) {
  detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG data in " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != img.width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout in " + path.string());
  }
  img.rgb.resize(img.width * img.height * 3);
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.rgb.data() + y * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void save_png(const std::filesystem::path& path, const Image8& img) {
  if (img.rgb.size() != img.width * img.height * 3) throw IoError("image buffer size does not match dimensions");
  detail::FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.rgb.data() + y * img.width * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to write PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// (1, 3, H, W) tensor with values v / 255.
template <std::floating_point T = float>
Tensor<T> to_tensor(const Image8& img) {
  const std::size_t plane = img.width * img.height;
  std::vector<T> v(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) v[c * plane + i] = static_cast<T>(img.rgb[i * 3 + c]) / T(255);
  return Tensor<T>(Shape{1, 3, img.height, img.width}, std::move(v));
}

/// Clamp to [0, 1], scale by 255, round half to even.
inline std::uint8_t quantize_pixel(double v) {
  const double c = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::nearbyint(c));
}

/// Batch item `index` of a 3-channel tensor as an 8-bit raster.
template <std::floating_point T>
Image8 to_image(const Tensor<T>& t, std::size_t index = 0) {
  const Shape& s = t.shape();
  if (s.channels != 3) throw ShapeError("to_image: expected 3 channels, got " + s.str());
  if (index >= s.batch) throw ShapeError("to_image: batch index out of range");
  Image8 img{s.width, s.height, std::vector<std::uint8_t>(s.width * s.height * 3)};
  const std::size_t plane = s.plane();
  const T* src = t.data() + index * 3 * plane;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.rgb[i * 3 + c] = quantize_pixel(static_cast<double>(src[c * plane + i]));
  return img;
}

/// Round trip through 8 bits: what a recipient of a saved PNG sees.
template <std::floating_point T>
Tensor<T> quantize(const Tensor<T>& t) {
  std::vector<T> v(t.numel());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<T>(quantize_pixel(static_cast<double>(t.data()[i]))) / T(255);
  return Tensor<T>(t.shape(), std::move(v));
}

}  // namespace imn
