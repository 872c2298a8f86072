#pragma once

// Single-level orthonormal 2-D Haar transform.
//
// (B, C, H, W) -> (B, 4C, H/2, W/2) with sub-band-major channels:
// [0, C) = LL, [C, 2C) = HL, [2C, 3C) = LH, [3C, 4C) = HH.
// For a 2x2 block [[a, b], [c, d]]:
//   LL = (a + b + c + d) / 2    HL = (a - b + c - d) / 2
//   LH = (a + b - c - d) / 2    HH = (a - b - c + d) / 2
// The 4x4 transform matrix is symmetric and orthogonal, so it is its own
// inverse and the adjoint of the forward transform is the inverse transform.

#include <cstddef>
#include <string>
#include <vector>

#include "imn/tensor.hpp"

namespace imn {

enum class Subband : std::size_t { LL = 0, HL = 1, LH = 2, HH = 3 };

template <std::floating_point T>
struct SubbandTensor {
  Tensor<T> tensor;

  const Shape& shape() const noexcept { return tensor.shape(); }
  /// Channel count of the source image.
  std::size_t image_channels() const noexcept { return tensor.shape().channels / 4; }
};

namespace detail {

template <class T>
void haar_analysis(const T* in, const Shape& image, T* out) {
  const std::size_t C = image.channels, H = image.height, W = image.width;
  const std::size_t h2 = H / 2, w2 = W / 2, q = h2 * w2;
  for (std::size_t n = 0; n < image.batch; ++n) {
    const T* src = in + n * C * H * W;
    T* dst = out + n * 4 * C * q;
    for (std::size_t c = 0; c < C; ++c) {
      const T* plane = src + c * H * W;
      T* ll = dst + (0 * C + c) * q;
      T* hl = dst + (1 * C + c) * q;
      T* lh = dst + (2 * C + c) * q;
      T* hh = dst + (3 * C + c) * q;
      for (std::size_t y = 0; y < h2; ++y) {
        const T* r0 = plane + (2 * y) * W;
        const T* r1 = r0 + W;
        for (std::size_t x = 0; x < w2; ++x) {
          const T a = r0[2 * x], b = r0[2 * x + 1], cc = r1[2 * x], d = r1[2 * x + 1];
          const std::size_t i = y * w2 + x;
          ll[i] = (a + b + cc + d) * T(0.5);
          hl[i] = (a - b + cc - d) * T(0.5);
          lh[i] = (a + b - cc - d) * T(0.5);
          hh[i] = (a - b - cc + d) * T(0.5);
        }
      }
    }
  }
}

// `image` is the shape of the reconstructed image.
template <class T>
void haar_synthesis(const T* in, const Shape& image, T* out) {
  const std::size_t C = image.channels, H = image.height, W = image.width;
  const std::size_t h2 = H / 2, w2 = W / 2, q = h2 * w2;
  for (std::size_t n = 0; n < image.batch; ++n) {
    const T* src = in + n * 4 * C * q;
    T* dst = out + n * C * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const T* ll = src + (0 * C + c) * q;
      const T* hl = src + (1 * C + c) * q;
      const T* lh = src + (2 * C + c) * q;
      const T* hh = src + (3 * C + c) * q;
      T* plane = dst + c * H * W;
      for (std::size_t y = 0; y < h2; ++y) {
        T* r0 = plane + (2 * y) * W;
        T* r1 = r0 + W;
        for (std::size_t x = 0; x < w2; ++x) {
          const std::size_t i = y * w2 + x;
          const T s = ll[i], h = hl[i], v = lh[i], d = hh[i];
          r0[2 * x] = (s + h + v + d) * T(0.5);
          r0[2 * x + 1] = (s - h + v - d) * T(0.5);
          r1[2 * x] = (s + h - v - d) * T(0.5);
          r1[2 * x + 1] = (s - h - v + d) * T(0.5);
        }
      }
    }
  }
}

}  // namespace detail

/// Forward transform. Odd heights or widths are rejected; callers must pad or crop.
template <std::floating_point T>
SubbandTensor<T> dwt_haar(const Tensor<T>& image) {
  const Shape& s = image.shape();
  if (s.height % 2 != 0 || s.width % 2 != 0)
    throw ShapeError("dwt_haar: image height and width must be even, got " + s.str() +
                     "; pad or crop the image to even dimensions");
  const Shape out_shape{s.batch, 4 * s.channels, s.height / 2, s.width / 2};
  std::vector<T> out(out_shape.numel());
  detail::haar_analysis(image.data(), s, out.data());
  Tensor<T> t = detail::make_result<T>("dwt_haar", out_shape, std::move(out), {&image}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    std::vector<T> g(p.value.size());
    detail::haar_synthesis(self.grad.data(), p.shape, g.data());
    auto& acc = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
  return SubbandTensor<T>{std::move(t)};
}

/// Inverse transform.
template <std::floating_point T>
Tensor<T> iwt_haar(const SubbandTensor<T>& subbands) {
  const Tensor<T>& x = subbands.tensor;
  const Shape& s = x.shape();
  if (s.channels % 4 != 0)
    throw ShapeError("iwt_haar: channel count " + std::to_string(s.channels) + " is not divisible by 4");
  const Shape out_shape{s.batch, s.channels / 4, s.height * 2, s.width * 2};
  std::vector<T> out(out_shape.numel());
  detail::haar_synthesis(x.data(), out_shape, out.data());
  return detail::make_result<T>("iwt_haar", out_shape, std::move(out), {&x}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    std::vector<T> g(p.value.size());
    detail::haar_analysis(self.grad.data(), self.shape, g.data());
    auto& acc = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  });
}

template <std::floating_point T>
Tensor<T> extract_subband(const SubbandTensor<T>& subbands, Subband band) {
  const std::size_t c = subbands.image_channels();
  const std::size_t k = static_cast<std::size_t>(band);
  return slice_channels(subbands.tensor, k * c, (k + 1) * c);
}

/// The low-frequency (LL) quadrant, shape (B, C, H/2, W/2).
template <std::floating_point T>
Tensor<T> extract_ll(const SubbandTensor<T>& subbands) {
  return extract_subband(subbands, Subband::LL);
}

}  // namespace imn
