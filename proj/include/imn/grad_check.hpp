#pragma once

// Central finite-difference verification of analytic gradients (64-bit only).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "imn/tensor.hpp"

namespace imn {

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
inline double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Maximum relative error between the analytic gradient of `f` at `point` and
/// central differences with step `epsilon`, taken over every coordinate.
template <class F>
double grad_check(F&& f, const Tensor<double>& point, double epsilon = 1e-4) {
  Tensor<double> x = point.detach();
  x.set_requires_grad(true);
  Tensor<double> y = f(x);
  backward(y);
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  Tensor<double> probe = point.detach();
  auto v = probe.mutable_values();
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + epsilon;
    const double plus = f(probe).item();
    v[i] = saved - epsilon;
    const double minus = f(probe).item();
    v[i] = saved;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    worst = std::max(worst, gradient_relative_error(analytic.empty() ? 0.0 : analytic[i], numeric));
  }
  return worst;
}

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// When non-empty, replaces `epsilon`: each coordinate is scored by the step
  /// that agrees best. Large steps may cross activation kinks, small ones lose
  /// digits to roundoff; a wrong gradient disagrees at every step.
  std::vector<double> steps;
  /// Coordinates probed per parameter tensor; 0 probes every coordinate.
  std::size_t coordinates_per_tensor = 0;
  std::uint64_t seed = 0;
};

/// Checks d loss / d parameter for a loss that closes over `params`.
/// Parameters are perturbed in place and restored afterwards. Existing
/// gradients on the parameters are cleared.
template <class LossFn>
double grad_check_parameters(LossFn&& loss_fn, std::span<Parameter<double>* const> params,
                             const GradCheckOptions& options = {}) {
  for (auto* p : params) p->tensor.zero_grad();
  backward(loss_fn());

  const std::vector<double> steps = options.steps.empty() ? std::vector<double>{options.epsilon} : options.steps;
  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (auto* p : params) {
    const std::vector<double> analytic(p->tensor.grad().begin(), p->tensor.grad().end());
    auto v = p->tensor.mutable_values();

    std::vector<std::size_t> coords(v.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.coordinates_per_tensor != 0 && options.coordinates_per_tensor < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coordinates_per_tensor);
    }

    for (std::size_t i : coords) {
      const double saved = v[i];
      double best = std::numeric_limits<double>::infinity();
      for (double h : steps) {
        v[i] = saved + h;
        const double plus = loss_fn().item();
        v[i] = saved - h;
        const double minus = loss_fn().item();
        v[i] = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        best = std::min(best, gradient_relative_error(analytic.empty() ? 0.0 : analytic[i], numeric));
      }
      worst = std::max(worst, best);
    }
  }
  for (auto* p : params) p->tensor.zero_grad();
  return worst;
}

}  // namespace imn
