#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "imn/tensor.hpp"

namespace imn {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are bound to the parameter list
/// given at construction; the list must not change afterwards.
template <std::floating_point T>
class Adam {
 public:
  explicit Adam(std::vector<Parameter<T>*> params, AdamParams hp = {}) : params_(std::move(params)), hp_(hp) {
    for (auto* p : params_) {
      m_.emplace_back(p->tensor.numel(), 0.0);
      v_.emplace_back(p->tensor.numel(), 0.0);
    }
  }

  /// One update with the given learning rate. Parameters without a gradient are skipped.
  void step(double learning_rate) {
    ++t_;
    const double c1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T>& t = params_[k]->tensor;
      if (!t.has_grad()) continue;
      auto g = t.grad();
      auto w = t.mutable_values();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        if (!std::isfinite(gi)) throw NumericError("non-finite gradient for parameter " + params_[k]->name);
        m[i] = hp_.beta1 * m[i] + (1.0 - hp_.beta1) * gi;
        v[i] = hp_.beta2 * v[i] + (1.0 - hp_.beta2) * gi * gi;
        const double update = learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + hp_.epsilon);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->tensor.zero_grad();
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamParams hp_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before rescaling.
template <std::floating_point T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    if (p->tensor.has_grad())
      for (T g : p->tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* p : params)
      if (p->tensor.has_grad())
        for (T& g : p->tensor.mutable_grad()) g = static_cast<T>(static_cast<double>(g) * scale);
  }
  return norm;
}

}  // namespace imn
