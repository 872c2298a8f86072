#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "imn/tensor.hpp"
#include "imn/wavelet.hpp"

namespace imn {

/// 3x3 same-size convolution layer.
template <std::floating_point T>
struct ConvLayer {
  Parameter<T> weight;
  Parameter<T> bias;

  ConvLayer() = default;
  ConvLayer(std::size_t in_channels, std::size_t out_channels, const std::string& name, std::size_t kernel = 3)
      : weight(Tensor<T>(Shape{out_channels, in_channels, kernel, kernel}), name + ".weight"),
        bias(Tensor<T>(Shape{1, out_channels, 1, 1}), name + ".bias") {}

  std::size_t kernel() const noexcept { return weight.tensor.shape().height; }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, weight.tensor, bias.tensor, (kernel() - 1) / 2);
  }

  /// He-normal weights times `gain`, zero bias.
  void init_he(std::mt19937_64& rng, double gain) {
    const Shape& s = weight.tensor.shape();
    const double fan_in = static_cast<double>(s.channels * s.height * s.width);
    std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / fan_in));
    for (auto& v : weight.tensor.mutable_values()) v = static_cast<T>(dist(rng));
    for (auto& v : bias.tensor.mutable_values()) v = T(0);
  }

  void init_zero() {
    for (auto& v : weight.tensor.mutable_values()) v = T(0);
    for (auto& v : bias.tensor.mutable_values()) v = T(0);
  }

  void init_normal(std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : weight.tensor.mutable_values()) v = static_cast<T>(dist(rng));
    for (auto& v : bias.tensor.mutable_values()) v = static_cast<T>(dist(rng));
  }
};

/// Five densely connected convolutions: layer i sees the block input
/// concatenated with the outputs of layers 1..i-1. Leaky ReLU after the first
/// four layers; the fifth is linear and starts at zero, so a fresh block maps
/// every input to zero.
template <std::floating_point T>
class DenseBlock {
 public:
  static constexpr std::size_t kLayers = 5;
  static constexpr std::size_t kDefaultGrowth = 32;

  DenseBlock() = default;

  DenseBlock(std::size_t in_channels, std::size_t out_channels, std::size_t growth, const std::string& name,
             std::mt19937_64& rng, double init_gain = 0.1)
      : in_channels_(in_channels), out_channels_(out_channels), growth_(growth) {
    for (std::size_t i = 0; i < kLayers; ++i) {
      const std::size_t cin = in_channels + i * growth;
      const std::size_t cout = i + 1 == kLayers ? out_channels : growth;
      layers_[i] = ConvLayer<T>(cin, cout, name + ".conv" + std::to_string(i + 1));
      if (i + 1 == kLayers)
        layers_[i].init_zero();
      else
        layers_[i].init_he(rng, init_gain);
    }
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.shape().channels != in_channels_)
      throw ShapeError("dense block expects " + std::to_string(in_channels_) + " channels, got " + x.shape().str());
    std::vector<Tensor<T>> features{x};
    features.reserve(kLayers);
    for (std::size_t i = 0; i + 1 < kLayers; ++i) {
      Tensor<T> in = features.size() == 1 ? x : concat_channels<T>(features);
      features.push_back(leaky_relu(layers_[i](in), T(kDefaultLeakySlope)));
    }
    return layers_[kLayers - 1](concat_channels<T>(features));
  }

  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t out_channels() const noexcept { return out_channels_; }
  std::size_t growth() const noexcept { return growth_; }

  std::array<ConvLayer<T>, kLayers>& layers() noexcept { return layers_; }
  const std::array<ConvLayer<T>, kLayers>& layers() const noexcept { return layers_; }

  void collect(std::vector<Parameter<T>*>& out) {
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }

 private:
  std::size_t in_channels_ = 0;
  std::size_t out_channels_ = 0;
  std::size_t growth_ = 0;
  std::array<ConvLayer<T>, kLayers> layers_;
};

/// Bounded scale logit: clamp * (2 * sigmoid(y) - 1), in (-clamp, clamp) and 0 at y = 0.
template <std::floating_point T>
Tensor<T> centered_sigmoid(const Tensor<T>& y, T clamp) {
  return scale(add_scalar(scale(sigmoid(y), T(2)), T(-1)), clamp);
}

/// One invertible embedding/recovering step on a pair of sub-band tensors.
///
///   forward:  mask'      = mask + phi(protected)
///             protected' = protected * exp(alpha(rho(mask'))) + eta(mask')
///   inverse:  protected  = (protected' - eta(mask')) * exp(-alpha(rho(mask')))
///             mask       = mask' - phi(protected)
template <std::floating_point T>
class CouplingBlock {
 public:
  static constexpr double kDefaultClamp = 2.0;

  CouplingBlock() = default;

  /// `branch_channels` is the sub-band channel count (4 x image channels).
  CouplingBlock(std::size_t branch_channels, std::size_t growth, T clamp, const std::string& name,
                std::mt19937_64& rng)
      : rho_(branch_channels, branch_channels, growth, name + ".rho", rng),
        phi_(branch_channels, branch_channels, growth, name + ".phi", rng),
        eta_(branch_channels, branch_channels, growth, name + ".eta", rng),
        clamp_(clamp) {
    if (!(clamp > T(0))) throw Error("coupling clamp must be positive");
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& protected_branch, const Tensor<T>& mask_branch) const {
    check_branches("coupling forward", protected_branch, mask_branch);
    Tensor<T> mask_next = add(mask_branch, phi_(protected_branch));
    Tensor<T> log_scale = centered_sigmoid(rho_(mask_next), clamp_);
    Tensor<T> protected_next = add(mul(protected_branch, exp(log_scale)), eta_(mask_next));
    return {std::move(protected_next), std::move(mask_next)};
  }

  std::pair<Tensor<T>, Tensor<T>> inverse(const Tensor<T>& protected_next, const Tensor<T>& mask_next) const {
    check_branches("coupling inverse", protected_next, mask_next);
    Tensor<T> log_scale = centered_sigmoid(rho_(mask_next), clamp_);
    Tensor<T> protected_branch = mul(sub(protected_next, eta_(mask_next)), exp(neg(log_scale)));
    Tensor<T> mask_branch = sub(mask_next, phi_(protected_branch));
    return {std::move(protected_branch), std::move(mask_branch)};
  }

  std::pair<SubbandTensor<T>, SubbandTensor<T>> forward(const SubbandTensor<T>& p, const SubbandTensor<T>& m) const {
    auto [pn, mn] = forward(p.tensor, m.tensor);
    return {SubbandTensor<T>{std::move(pn)}, SubbandTensor<T>{std::move(mn)}};
  }

  std::pair<SubbandTensor<T>, SubbandTensor<T>> inverse(const SubbandTensor<T>& p, const SubbandTensor<T>& m) const {
    auto [pi, mi] = inverse(p.tensor, m.tensor);
    return {SubbandTensor<T>{std::move(pi)}, SubbandTensor<T>{std::move(mi)}};
  }

  T clamp() const noexcept { return clamp_; }
  DenseBlock<T>& rho() noexcept { return rho_; }
  DenseBlock<T>& phi() noexcept { return phi_; }
  DenseBlock<T>& eta() noexcept { return eta_; }
  const DenseBlock<T>& rho() const noexcept { return rho_; }
  const DenseBlock<T>& phi() const noexcept { return phi_; }
  const DenseBlock<T>& eta() const noexcept { return eta_; }

  void collect(std::vector<Parameter<T>*>& out) {
    rho_.collect(out);
    phi_.collect(out);
    eta_.collect(out);
  }

 private:
  static void check_branches(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
      throw ShapeError(std::string(op) + ": branch shapes differ " + a.shape().str() + " vs " + b.shape().str());
  }

  DenseBlock<T> rho_;
  DenseBlock<T> phi_;
  DenseBlock<T> eta_;
  T clamp_ = T(kDefaultClamp);
};

}  // namespace imn
