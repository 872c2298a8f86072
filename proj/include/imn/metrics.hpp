#pragma once

// PSNR, SSIM, RMSE and MAE on the 0-255 scale for tensors holding [0, 1] images.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "imn/tensor.hpp"

namespace imn {

struct MetricReport {
  double psnr = 0.0;  // dB; +infinity for identical images
  double ssim = 0.0;
  double rmse = 0.0;  // 0-255 scale
  double mae = 0.0;   // 0-255 scale
};

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

inline constexpr double kPixelScale = 255.0;

inline double psnr_from_rmse(double rmse) {
  if (rmse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(kPixelScale / rmse);
}

namespace detail {

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double c = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Valid-region separable filtering of one plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                        const std::vector<double>& k) {
  const std::size_t n = k.size();
  const std::size_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * plane[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM of one channel plane; inputs on the 0-255 scale.
inline double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t h, std::size_t w,
                         const SsimParams& p = {}) {
  if (h < p.window || w < p.window)
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                     std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
  if (a == b) return 1.0;
  const auto k = detail::gaussian_window(p.window, p.sigma);
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = detail::filter_valid(a, h, w, k);
  const auto mu_b = detail::filter_valid(b, h, w, k);
  const auto e_aa = detail::filter_valid(aa, h, w, k);
  const auto e_bb = detail::filter_valid(bb, h, w, k);
  const auto e_ab = detail::filter_valid(ab, h, w, k);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

/// Metrics of batch item `index`; SSIM is averaged over channels.
template <std::floating_point T>
MetricReport image_metrics(const Tensor<T>& a, const Tensor<T>& b, std::size_t index, const SsimParams& params = {}) {
  if (a.shape() != b.shape())
    throw ShapeError("metrics: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const Shape& s = a.shape();
  const std::size_t plane = s.plane();
  const std::size_t len = s.image_size();
  const T* pa = a.data() + index * len;
  const T* pb = b.data() + index * len;

  double sq = 0.0, ab = 0.0, ssim = 0.0;
  std::vector<double> ca(plane), cb(plane);
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      ca[i] = kPixelScale * static_cast<double>(pa[c * plane + i]);
      cb[i] = kPixelScale * static_cast<double>(pb[c * plane + i]);
      const double d = ca[i] - cb[i];
      sq += d * d;
      ab += std::abs(d);
    }
    ssim += ssim_plane(ca, cb, s.height, s.width, params);
  }
  MetricReport r;
  r.rmse = std::sqrt(sq / static_cast<double>(len));
  r.mae = ab / static_cast<double>(len);
  r.psnr = psnr_from_rmse(r.rmse);
  r.ssim = ssim / static_cast<double>(s.channels);
  return r;
}

/// Arithmetic mean of each field.
inline MetricReport average(std::span<const MetricReport> reports) {
  MetricReport r;
  if (reports.empty()) return r;
  for (const auto& m : reports) {
    r.psnr += m.psnr;
    r.ssim += m.ssim;
    r.rmse += m.rmse;
    r.mae += m.mae;
  }
  const double n = static_cast<double>(reports.size());
  r.psnr /= n;
  r.ssim /= n;
  r.rmse /= n;
  r.mae /= n;
  return r;
}

/// Metrics computed per batch item, then averaged.
template <std::floating_point T>
MetricReport compute_metrics(const Tensor<T>& a, const Tensor<T>& b, const SsimParams& params = {}) {
  if (a.shape() != b.shape())
    throw ShapeError("metrics: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  std::vector<MetricReport> per;
  for (std::size_t n = 0; n < a.shape().batch; ++n) per.push_back(image_metrics(a, b, n, params));
  return average(per);
}

/// Pooled variant: RMSE/MAE/PSNR from the error over the whole batch; SSIM averaged per image.
template <std::floating_point T>
MetricReport compute_metrics_pooled(const Tensor<T>& a, const Tensor<T>& b, const SsimParams& params = {}) {
  MetricReport r = compute_metrics(a, b, params);
  double sq = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = kPixelScale * (static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
    sq += d * d;
    ab += std::abs(d);
  }
  const double n = static_cast<double>(a.numel());
  r.rmse = std::sqrt(sq / n);
  r.mae = ab / n;
  r.psnr = psnr_from_rmse(r.rmse);
  return r;
}

/// PSNR only (cheap; no SSIM), averaged per image.
template <std::floating_point T>
double mean_psnr(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  const std::size_t len = a.shape().image_size();
  double total = 0.0;
  for (std::size_t n = 0; n < a.shape().batch; ++n) {
    double sq = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double d = kPixelScale * (static_cast<double>(a.data()[n * len + i]) - static_cast<double>(b.data()[n * len + i]));
      sq += d * d;
    }
    total += psnr_from_rmse(std::sqrt(sq / static_cast<double>(len)));
  }
  return total / static_cast<double>(a.shape().batch);
}

}  // namespace imn
