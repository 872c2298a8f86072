#pragma once

// Image corpora: directory loading, square center crop, bilinear resize.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "imn/image_io.hpp"
#include "imn/tensor.hpp"

namespace imn {

inline Image8 center_crop_square(const Image8& img) {
  const std::size_t side = std::min(img.width, img.height);
  if (side == img.width && side == img.height) return img;
  const std::size_t x0 = (img.width - side) / 2;
  const std::size_t y0 = (img.height - side) / 2;
  Image8 out{side, side, std::vector<std::uint8_t>(side * side * 3)};
  for (std::size_t y = 0; y < side; ++y)
    std::copy_n(img.rgb.data() + ((y0 + y) * img.width + x0) * 3, side * 3, out.rgb.data() + y * side * 3);
  return out;
}

/// Bilinear resampling with pixel-centre alignment; returns float RGB planes (3, h, w) in [0, 1].
inline std::vector<float> resize_bilinear(const Image8& img, std::size_t out_w, std::size_t out_h) {
  std::vector<float> out(3 * out_w * out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const auto px = [&](std::size_t x, std::size_t y, std::size_t c) {
    return static_cast<double>(img.rgb[(y * img.width + x) * 3 + c]) / 255.0;
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = px(x0, y0, c) * (1.0 - wx) + px(x1, y0, c) * wx;
        const double bot = px(x0, y1, c) * (1.0 - wx) + px(x1, y1, c) * wx;
        out[(c * out_h + y) * out_w + x] = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

/// Crop to a centred square, then resize to size x size.
/// A square input that already has the target size is converted exactly.
inline Tensor<float> preprocess(const Image8& img, std::size_t size) {
  const Image8 sq = center_crop_square(img);
  if (sq.width == size) return to_tensor<float>(sq);
  return Tensor<float>(Shape{1, 3, size, size}, resize_bilinear(sq, size, size));
}

struct ImageSet {
  std::vector<std::string> names;
  std::vector<Tensor<float>> images;  // each (1, 3, H, W)

  std::size_t size() const noexcept { return images.size(); }
};

/// Sorted list of the *.png files in `dir`.
inline std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Loads every PNG in `dir`. With `size` = 0 images keep their native
/// geometry, which must then have even height and width.
inline ImageSet load_image_dir(const std::filesystem::path& dir, std::size_t size) {
  if (size % 2 != 0) throw ShapeError("image size must be even, got " + std::to_string(size));
  ImageSet set;
  for (const auto& f : list_png_files(dir)) {
    Image8 img = load_png(f);
    if (size == 0) {
      if (img.width % 2 != 0 || img.height % 2 != 0)
        throw ShapeError("image " + f.filename().string() + " has odd dimensions " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + "; pad or crop it");
      set.images.push_back(to_tensor<float>(img));
    } else {
      set.images.push_back(preprocess(img, size));
    }
    set.names.push_back(f.filename().string());
  }
  return set;
}

/// Concatenates images[indices[i]] along the batch axis (no gradient history).
inline Tensor<float> stack_images(const ImageSet& set, std::span<const std::size_t> indices) {
  std::vector<Tensor<float>> parts;
  parts.reserve(indices.size());
  for (std::size_t i : indices) parts.push_back(set.images.at(i));
  return concat_batch<float>(parts);
}

}  // namespace imn
