#pragma once

// Procedural portrait-like images for desk-scale experiments when no face
// corpus is at hand: shaded background, soft-edged head ellipse, hair cap,
// eyes, mouth and low-amplitude sinusoidal texture.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "imn/image_io.hpp"

namespace imn {

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry, angle;
  std::array<double, 3> color;
  double softness;

  // Coverage in [0, 1] with a smooth edge.
  double coverage(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    const double r = std::sqrt(u * u + v * v);
    return std::clamp((1.0 - r) / softness + 0.5, 0.0, 1.0);
  }
};

}  // namespace detail

inline Image8 synthetic_portrait(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto color = [&](double lo, double hi) {
    return std::array<double, 3>{lo + (hi - lo) * u(rng), lo + (hi - lo) * u(rng), lo + (hi - lo) * u(rng)};
  };

  const auto bg_top = color(0.1, 0.9);
  const auto bg_bottom = color(0.1, 0.9);
  const double skin_base = 0.45 + 0.4 * u(rng);
  const std::array<double, 3> skin{std::min(1.0, skin_base + 0.12), skin_base, std::max(0.0, skin_base - 0.1)};
  const auto hair = color(0.02, 0.5);

  const double cx = 0.5 + 0.08 * (u(rng) - 0.5);
  const double cy = 0.55 + 0.08 * (u(rng) - 0.5);
  const double rx = 0.24 + 0.06 * u(rng);
  const double ry = 0.32 + 0.06 * u(rng);
  const double tilt = 0.25 * (u(rng) - 0.5);

  detail::Ellipse head{cx, cy, rx, ry, tilt, skin, 0.08};
  detail::Ellipse hair_cap{cx, cy - 0.2 * ry, rx * 1.15, ry * 0.95, tilt, hair, 0.1};
  detail::Ellipse fringe{cx, cy - 0.85 * ry, rx * 0.9, ry * 0.3, tilt, hair, 0.15};
  const double eye_dx = rx * (0.38 + 0.1 * u(rng));
  const double eye_y = cy - ry * (0.12 + 0.1 * u(rng));
  const auto iris = color(0.0, 0.45);
  detail::Ellipse eye_l{cx - eye_dx, eye_y, rx * 0.16, ry * 0.07, tilt, iris, 0.3};
  detail::Ellipse eye_r{cx + eye_dx, eye_y, rx * 0.16, ry * 0.07, tilt, iris, 0.3};
  const std::array<double, 3> lip{std::min(1.0, skin_base + 0.2), skin_base * 0.5, skin_base * 0.5};
  detail::Ellipse mouth{cx, cy + ry * (0.45 + 0.1 * u(rng)), rx * (0.3 + 0.15 * u(rng)), ry * 0.06, tilt, lip, 0.3};

  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 4> waves{};
  for (auto& w : waves) w = {2.0 + 10.0 * u(rng), 2.0 + 10.0 * u(rng), 6.283185307179586 * u(rng), 0.015 + 0.02 * u(rng)};

  const double light = u(rng) - 0.5;
  Image8 img{size, size, std::vector<std::uint8_t>(size * size * 3)};
  for (std::size_t py = 0; py < size; ++py) {
    for (std::size_t px = 0; px < size; ++px) {
      const double x = (static_cast<double>(px) + 0.5) / static_cast<double>(size);
      const double y = (static_cast<double>(py) + 0.5) / static_cast<double>(size);
      std::array<double, 3> c{};
      for (int k = 0; k < 3; ++k) c[k] = bg_top[k] * (1.0 - y) + bg_bottom[k] * y;
      const auto paint = [&](const detail::Ellipse& e, double shade) {
        const double a = e.coverage(x, y);
        for (int k = 0; k < 3; ++k) c[k] = c[k] * (1.0 - a) + std::clamp(e.color[k] * shade, 0.0, 1.0) * a;
      };
      paint(hair_cap, 1.0);
      paint(head, 1.0 + 0.35 * light * (x - cx) / rx);
      paint(fringe, 1.0);
      paint(eye_l, 1.0);
      paint(eye_r, 1.0);
      paint(mouth, 1.0);
      double tex = 0.0;
      for (const auto& w : waves) tex += w.amp * std::sin(6.283185307179586 * (w.fx * x + w.fy * y) + w.phase);
      for (int k = 0; k < 3; ++k) img.rgb[(py * size + px) * 3 + k] = quantize_pixel(c[k] + tex);
    }
  }
  return img;
}

/// Writes `count` portraits named img_0000.png, img_0001.png, ... into `dir`.
inline void write_synthetic_corpus(const std::filesystem::path& dir, std::size_t count, std::size_t size,
                                   std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04zu.png", i);
    save_png(dir / name, synthetic_portrait(size, seed * 1000003ULL + i));
  }
}

}  // namespace imn
