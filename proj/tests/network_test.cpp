#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "imn/grad_check.hpp"
#include "imn/losses.hpp"
#include "imn/network.hpp"

using namespace imn;

namespace {

template <class T>
Tensor<T> random_image(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(s, std::move(v));
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i])));
  return worst;
}

ModelConfig small_config(std::size_t blocks, std::size_t growth = 4) {
  ModelConfig c;
  c.blocks = blocks;
  c.growth = growth;
  return c;
}

}  // namespace

TEST(ModelConfig, Validation) {
  EXPECT_NO_THROW(small_config(1).validate());
  EXPECT_NO_THROW(small_config(32).validate());
  EXPECT_THROW(small_config(0).validate(), Error);
  EXPECT_THROW(small_config(33).validate(), Error);
  ModelConfig c;
  c.clamp = 0.0;
  EXPECT_THROW(IMNModel<float>{c}, Error);
}

TEST(Model, DefaultArchitecture) {
  IMNModel<float> model;
  EXPECT_EQ(model.block_count(), 8u);
  EXPECT_EQ(model.parameters().size(), 8u * 3 * 5 * 2);
  // one dense block: 4 growth-32 layers and a 12-channel head, 3x3 kernels
  std::size_t dense = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t cin = 12 + 32 * i, cout = i == 4 ? 12 : 32;
    dense += cout * cin * 9 + cout;
  }
  EXPECT_EQ(model.parameter_count(), 8 * 3 * dense);
}

TEST(Model, ParameterNamesAreUnique) {
  IMNModel<float> model(small_config(4));
  std::set<std::string> names;
  for (const auto* p : model.parameters()) names.insert(p->name);
  EXPECT_EQ(names.size(), model.parameters().size());
  EXPECT_TRUE(names.count("block4.phi.conv3.weight"));
}

TEST(PutOn, IdentityModel) {
  IMNModel<float> model(small_config(3));
  auto xp = random_image<float>({1, 3, 16, 16}, 1);
  auto xm = random_image<float>({1, 3, 16, 16}, 2);
  auto r = put_on_mask(xp, xm, model);
  EXPECT_LT(max_abs_diff(r.masked, xm), 1e-6);
  EXPECT_LT(max_abs_diff(r.lost, xp), 1e-6);
}

TEST(PutOn, ShapeContract) {
  IMNModel<float> model(small_config(1));
  auto r = put_on_mask(Tensor<float>::zeros({1, 3, 256, 256}), Tensor<float>::zeros({1, 3, 256, 256}), model);
  EXPECT_EQ(r.masked.shape(), (Shape{1, 3, 256, 256}));
  EXPECT_EQ(r.lost.shape(), (Shape{1, 3, 256, 256}));
}

TEST(PutOn, RejectsBadInputs) {
  IMNModel<float> model(small_config(1));
  EXPECT_THROW(put_on_mask(Tensor<float>::zeros({1, 3, 8, 8}), Tensor<float>::zeros({1, 3, 8, 10}), model), ShapeError);
  EXPECT_THROW(put_on_mask(Tensor<float>::zeros({1, 1, 8, 8}), Tensor<float>::zeros({1, 1, 8, 8}), model), ShapeError);
  EXPECT_THROW(put_on_mask(Tensor<float>::zeros({1, 3, 7, 8}), Tensor<float>::zeros({1, 3, 7, 8}), model), ShapeError);
  EXPECT_THROW(put_off_mask(Tensor<float>::zeros({1, 3, 8, 8}), Tensor<float>::zeros({2, 3, 8, 8}), model), ShapeError);
}

TEST(PutOff, RandomModelWithTrueLost) {
  IMNModel<float> model(small_config(4));
  model.randomize(11);
  auto xp = random_image<float>({2, 3, 16, 16}, 1);
  auto xm = random_image<float>({2, 3, 16, 16}, 2);
  auto on = put_on_mask(xp, xm, model);
  EXPECT_GT(max_abs_diff(on.masked, xm), 1e-3);
  auto off = put_off_mask(on.masked, on.lost, model);
  EXPECT_LT(max_abs_diff(off.recovered, xp), 1e-3);
  EXPECT_LT(max_abs_diff(off.r_mask, xm), 1e-3);
}

TEST(PutOff, IdentityModelReturnsNoise) {
  IMNModel<float> model(small_config(2));
  auto masked = random_image<float>({1, 3, 8, 8}, 3);
  auto n = sample_aux<float>(masked.shape(), 99);
  auto off = put_off_mask(masked, n, model);
  EXPECT_LT(max_abs_diff(off.recovered, n), 1e-5);
  EXPECT_LT(max_abs_diff(off.r_mask, masked), 1e-6);
}

TEST(SampleAux, Deterministic) {
  auto a = sample_aux<float>({1, 3, 8, 8}, 42);
  auto b = sample_aux<float>({1, 3, 8, 8}, 42);
  EXPECT_EQ(std::vector<float>(a.values().begin(), a.values().end()),
            std::vector<float>(b.values().begin(), b.values().end()));
}

TEST(SampleAux, StandardNormalMoments) {
  auto a = sample_aux<double>({1, 1, 1000, 1000}, 7);
  double s = 0.0, s2 = 0.0;
  for (double v : a.values()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(a.numel());
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(SampleAux, DifferentSeedsDiffer) {
  auto a = sample_aux<float>({1, 3, 32, 32}, 1);
  auto b = sample_aux<float>({1, 3, 32, 32}, 2);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) differ += a.values()[i] != b.values()[i];
  EXPECT_GT(static_cast<double>(differ), 0.99 * static_cast<double>(a.numel()));
}

TEST(NetworkProperties, InvertibilityAcrossDepths) {
  for (std::size_t blocks : {1u, 2u, 5u}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      IMNModel<float> model(small_config(blocks, 6));
      model.randomize(1000 * blocks + seed);
      auto xp = random_image<float>({1, 3, 12, 20}, seed);
      auto xm = random_image<float>({1, 3, 12, 20}, seed + 50);
      auto on = put_on_mask(xp, xm, model);
      auto off = put_off_mask(on.masked, on.lost, model);
      EXPECT_LT(max_abs_diff(off.recovered, xp), 1e-3);
      EXPECT_LT(max_abs_diff(off.r_mask, xm), 1e-3);
    }
  }
}

TEST(NetworkProperties, FullyConvolutional) {
  IMNModel<float> model(small_config(2));
  model.randomize(4);
  for (std::size_t size : {8u, 32u, 64u}) {
    auto on = put_on_mask(random_image<float>({1, 3, size, size}, 1), random_image<float>({1, 3, size, size}, 2), model);
    EXPECT_EQ(on.masked.shape(), (Shape{1, 3, size, size}));
  }
}

TEST(NetworkProperties, BitIdenticalReruns) {
  IMNModel<float> model(small_config(2));
  model.randomize(5);
  auto xp = random_image<float>({1, 3, 16, 16}, 1);
  auto xm = random_image<float>({1, 3, 16, 16}, 2);
  auto a = put_on_mask(xp, xm, model);
  auto b = put_on_mask(xp, xm, model);
  EXPECT_EQ(std::vector<float>(a.masked.values().begin(), a.masked.values().end()),
            std::vector<float>(b.masked.values().begin(), b.masked.values().end()));
}

TEST(NetworkProperties, InitSeedChangesOnlyHiddenLayers) {
  ModelConfig c = small_config(1);
  c.init_seed = 1;
  IMNModel<float> a(c);
  c.init_seed = 2;
  IMNModel<float> b(c);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  EXPECT_NE(pa[0]->tensor.values()[0], pb[0]->tensor.values()[0]);
  for (float v : pa[8]->tensor.values()) EXPECT_EQ(v, 0.0f);  // rho.conv5.weight
}

TEST(NetworkGradients, TotalLossTwoBlocks) {
  IMNModel<double> model(small_config(2, 4));
  model.randomize(21, 0.5);
  const auto xp = random_image<double>({1, 3, 8, 8}, 1);
  const auto xm = random_image<double>({1, 3, 8, 8}, 2);
  const auto n = sample_aux<double>(xp.shape(), 3);
  const LossWeights w{1.0, 3.0, 1.0};
  const auto loss = [&] {
    auto on = put_on_mask(xp, xm, model);
    auto off = put_off_mask(on.masked, n, model);
    return total_loss(embedding_loss(xm, on.masked), recovering_loss(xp, off.recovered),
                      low_frequency_loss(xm, on.masked), w)
        .total;
  };
  auto ps = model.parameters();
  GradCheckOptions opt;
  opt.coordinates_per_tensor = 6;
  opt.epsilon = 1e-5;  // larger steps cross leaky-ReLU kinks
  EXPECT_LT(grad_check_parameters(loss, ps, opt), 1e-4);
}
