#pragma once

#include <cmath>
#include <string>

#include "imn/tensor.hpp"
#include "imn/wavelet.hpp"

namespace imn {

enum class Distance { SquaredError, AbsoluteError };

struct LossWeights {
  double lambda1 = 1.0;  // embedding
  double lambda2 = 3.0;  // recovering
  double lambda3 = 1.0;  // low frequency

  void validate() const {
    if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0))
      throw Error("loss weights must be non-negative");
    if (lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0) throw Error("loss weights must not all be zero");
  }

  std::string str() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

namespace detail {
inline std::string format_weight(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  std::string s = std::to_string(v);
  while (!s.empty() && s.back() == '0') s.pop_back();
  return s;
}
}  // namespace detail

/// "1:3:1"
inline std::string LossWeights::str() const {
  return detail::format_weight(lambda1) + ":" + detail::format_weight(lambda2) + ":" +
         detail::format_weight(lambda3);
}

struct LossReport {
  double embedding = 0.0;
  double recovering = 0.0;
  double low_frequency = 0.0;
  double total = 0.0;
};

/// Mean elementwise distance between two same-shaped tensors.
template <std::floating_point T>
Tensor<T> distance(const Tensor<T>& a, const Tensor<T>& b, Distance kind = Distance::SquaredError) {
  if (a.shape() != b.shape())
    throw ShapeError("loss: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> diff = sub(a, b);
  return mean(kind == Distance::SquaredError ? square(diff) : abs(diff));
}

/// Difference between the mask image and the masked output.
template <std::floating_point T>
Tensor<T> embedding_loss(const Tensor<T>& x_mask, const Tensor<T>& x_masked,
                         Distance kind = Distance::SquaredError) {
  return distance(x_mask, x_masked, kind);
}

/// Difference between the protected image and its recovery from sampled auxiliary noise.
template <std::floating_point T>
Tensor<T> recovering_loss(const Tensor<T>& x_protected, const Tensor<T>& x_recovered,
                          Distance kind = Distance::SquaredError) {
  return distance(x_protected, x_recovered, kind);
}

/// Difference between the LL sub-bands of the mask and masked images.
template <std::floating_point T>
Tensor<T> low_frequency_loss(const Tensor<T>& x_mask, const Tensor<T>& x_masked,
                             Distance kind = Distance::SquaredError) {
  if (x_mask.shape() != x_masked.shape())
    throw ShapeError("low_frequency_loss: shape mismatch " + x_mask.shape().str() + " vs " + x_masked.shape().str());
  return distance(extract_ll(dwt_haar(x_masked)), extract_ll(dwt_haar(x_mask)), kind);
}

/// Weighted sum of already computed components.
inline LossReport total_loss(const LossReport& components, const LossWeights& w) {
  LossReport r = components;
  r.total = w.lambda1 * r.embedding + w.lambda2 * r.recovering + w.lambda3 * r.low_frequency;
  return r;
}

/// Differentiable total plus its report.
template <std::floating_point T>
struct TotalLoss {
  Tensor<T> total;
  LossReport report;
};

template <std::floating_point T>
TotalLoss<T> total_loss(const Tensor<T>& embedding, const Tensor<T>& recovering, const Tensor<T>& low_frequency,
                        const LossWeights& w) {
  Tensor<T> total = add(add(scale(embedding, static_cast<T>(w.lambda1)), scale(recovering, static_cast<T>(w.lambda2))),
                        scale(low_frequency, static_cast<T>(w.lambda3)));
  LossReport r{static_cast<double>(embedding.item()), static_cast<double>(recovering.item()),
               static_cast<double>(low_frequency.item()), 0.0};
  return {std::move(total), total_loss(r, w)};
}

}  // namespace imn
