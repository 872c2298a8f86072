#pragma once

// The invertible masking network: Haar DWT -> N coupling blocks -> inverse DWT.
// put_on_mask runs the blocks forward; put_off_mask runs them in reverse order
// through their inverses.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "imn/coupling.hpp"
#include "imn/tensor.hpp"
#include "imn/wavelet.hpp"

namespace imn {

struct ModelConfig {
  static constexpr std::size_t kMinBlocks = 1;
  static constexpr std::size_t kMaxBlocks = 32;

  std::size_t blocks = 8;
  std::size_t image_channels = 3;
  std::size_t growth = DenseBlock<float>::kDefaultGrowth;
  double clamp = CouplingBlock<float>::kDefaultClamp;
  /// Seed for the He-normal initialization of the non-final dense layers.
  std::uint64_t init_seed = 0;

  void validate() const {
    if (blocks < kMinBlocks || blocks > kMaxBlocks)
      throw Error("block count must be in [1, 32], got " + std::to_string(blocks));
    if (image_channels == 0) throw Error("image_channels must be positive");
    if (growth == 0) throw Error("growth must be positive");
    if (!(clamp > 0.0)) throw Error("clamp must be positive");
  }
};

/// Where a set of weights came from.
struct Provenance {
  std::array<double, 3> lambdas{0.0, 0.0, 0.0};
  std::uint64_t iterations = 0;
  std::string dataset_tag;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

template <std::floating_point T>
class IMNModel {
 public:
  explicit IMNModel(const ModelConfig& config = {}) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.init_seed);
    blocks_.reserve(config_.blocks);
    for (std::size_t i = 0; i < config_.blocks; ++i)
      blocks_.emplace_back(4 * config_.image_channels, config_.growth, static_cast<T>(config_.clamp),
                           "block" + std::to_string(i + 1), rng);
  }

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  std::size_t image_channels() const noexcept { return config_.image_channels; }

  std::vector<CouplingBlock<T>>& blocks() noexcept { return blocks_; }
  const std::vector<CouplingBlock<T>>& blocks() const noexcept { return blocks_; }

  Provenance& provenance() noexcept { return provenance_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  /// Every trainable parameter in a stable order (block, rho/phi/eta, layer, weight/bias).
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& b : blocks_) b.collect(out);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto ps = const_cast<IMNModel*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->tensor.zero_grad();
  }

  /// Overwrites every parameter, final layers included: He-normal weights
  /// times `gain` and N(0, (0.1 gain)^2) biases. Used to exercise
  /// invertibility away from the identity initialization.
  void randomize(std::uint64_t seed, double gain = 0.1) {
    std::mt19937_64 rng(seed);
    for (auto& b : blocks_)
      for (DenseBlock<T>* d : {&b.rho(), &b.phi(), &b.eta()})
        for (auto& l : d->layers()) {
          l.init_he(rng, gain);
          std::normal_distribution<double> dist(0.0, 0.1 * gain);
          for (auto& v : l.bias.tensor.mutable_values()) v = static_cast<T>(dist(rng));
        }
  }

 private:
  ModelConfig config_;
  std::vector<CouplingBlock<T>> blocks_;
  Provenance provenance_;
};

template <std::floating_point T>
struct MaskedResult {
  Tensor<T> masked;  // visible output, close to the mask image once trained
  Tensor<T> lost;    // residual needed for exact inversion
};

template <std::floating_point T>
struct RecoveredResult {
  Tensor<T> recovered;
  Tensor<T> r_mask;
};

namespace detail {

template <std::floating_point T>
void check_pair(const char* op, const Tensor<T>& a, const Tensor<T>& b, std::size_t channels) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": image shapes differ " + a.shape().str() + " vs " + b.shape().str());
  if (a.shape().channels != channels)
    throw ShapeError(std::string(op) + ": model expects " + std::to_string(channels) + " channels, got " +
                     a.shape().str());
  if (a.shape().height % 2 != 0 || a.shape().width % 2 != 0)
    throw ShapeError(std::string(op) + ": height and width must be even, got " + a.shape().str());
}

}  // namespace detail

/// Embeds `x_protected` into `x_mask`.
template <std::floating_point T>
MaskedResult<T> put_on_mask(const Tensor<T>& x_protected, const Tensor<T>& x_mask, const IMNModel<T>& model) {
  detail::check_pair("put_on_mask", x_protected, x_mask, model.image_channels());
  Tensor<T> p = dwt_haar(x_protected).tensor;
  Tensor<T> m = dwt_haar(x_mask).tensor;
  for (const auto& block : model.blocks()) std::tie(p, m) = block.forward(p, m);
  return {iwt_haar(SubbandTensor<T>{m}), iwt_haar(SubbandTensor<T>{p})};
}

/// Reverses the embedding. `aux` is either the true lost information (exact
/// recovery) or a sample from sample_aux (the deployment protocol).
template <std::floating_point T>
RecoveredResult<T> put_off_mask(const Tensor<T>& x_masked, const Tensor<T>& aux, const IMNModel<T>& model) {
  detail::check_pair("put_off_mask", x_masked, aux, model.image_channels());
  Tensor<T> p = dwt_haar(aux).tensor;
  Tensor<T> m = dwt_haar(x_masked).tensor;
  const auto& blocks = model.blocks();
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) std::tie(p, m) = it->inverse(p, m);
  return {iwt_haar(SubbandTensor<T>{p}), iwt_haar(SubbandTensor<T>{m})};
}

/// I.i.d. standard normal tensor; identical (shape, seed) give identical output.
template <std::floating_point T>
Tensor<T> sample_aux(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> v(shape.numel());
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(shape, std::move(v));
}

}  // namespace imn
