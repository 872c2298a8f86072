#pragma once

#include <cmath>
#include <cstddef>

#include "imn/metrics.hpp"

namespace imn::oracle {

// Direct 2D-window SSIM with centred moments; shares no code with the library.
inline double naive_ssim_plane(const double* a, const double* b, std::size_t h, std::size_t w) {
  const int r = 5;
  double g[11][11], gs = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) gs += g[i + r][j + r] = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = r; y + r < h; ++y)
    for (std::size_t x = r; x + r < w; ++x) {
      double ma = 0, mb = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          const double k = g[i + r][j + r] / gs;
          ma += k * 255 * a[(y + i) * w + x + j];
          mb += k * 255 * b[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          const double k = g[i + r][j + r] / gs;
          const double da = 255 * a[(y + i) * w + x + j] - ma, db = 255 * b[(y + i) * w + x + j] - mb;
          va += k * da * da;
          vb += k * db * db;
          cov += k * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

inline MetricReport naive_metrics(const Tensor<double>& a, const Tensor<double>& b) {
  const Shape& s = a.shape();
  MetricReport sum;
  for (std::size_t n = 0; n < s.batch; ++n) {
    double sq = 0, ab = 0, ssim = 0;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double* pa = a.data() + (n * s.channels + c) * s.plane();
      const double* pb = b.data() + (n * s.channels + c) * s.plane();
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sq += std::pow(255 * (pa[i] - pb[i]), 2);
        ab += std::abs(255 * (pa[i] - pb[i]));
      }
      ssim += naive_ssim_plane(pa, pb, s.height, s.width);
    }
    const double rmse = std::sqrt(sq / static_cast<double>(s.image_size()));
    sum.rmse += rmse;
    sum.mae += ab / static_cast<double>(s.image_size());
    sum.psnr += 10 * std::log10(255.0 * 255.0 / (rmse * rmse));
    sum.ssim += ssim / static_cast<double>(s.channels);
  }
  const double k = static_cast<double>(s.batch);
  return {sum.psnr / k, sum.ssim / k, sum.rmse / k, sum.mae / k};
}

}  // namespace imn::oracle
