#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "imn/grad_check.hpp"
#include "imn/wavelet.hpp"

using namespace imn;

namespace {

template <class T>
Tensor<T> random_image(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(s, std::move(v));
}

// Orthonormal 2D Haar on one 2x2 block [[a, b], [c, d]], rows LL, HL, LH, HH.
constexpr double kHaar[4][4] = {
    {0.5, 0.5, 0.5, 0.5},
    {0.5, -0.5, 0.5, -0.5},
    {0.5, 0.5, -0.5, -0.5},
    {0.5, -0.5, -0.5, 0.5},
};

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i])));
  return worst;
}

template <class T>
double energy(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.values()) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

}  // namespace

TEST(Dwt, ShapeAlgebra) {
  auto y = dwt_haar(Tensor<float>::zeros({1, 3, 128, 128}));
  EXPECT_EQ(y.shape(), (Shape{1, 12, 64, 64}));
  EXPECT_EQ(y.image_channels(), 3u);
}

TEST(Dwt, ConstantImage) {
  auto y = dwt_haar(Tensor<float>::full({1, 3, 8, 8}, 4.0f));
  const std::size_t c = 3, plane = 16;
  for (std::size_t i = 0; i < c * plane; ++i) EXPECT_FLOAT_EQ(y.tensor.values()[i], 8.0f);
  for (std::size_t i = c * plane; i < 4 * c * plane; ++i) EXPECT_FLOAT_EQ(y.tensor.values()[i], 0.0f);
}

TEST(Dwt, SingleBlockMatchesMatrixOracle) {
  const double block[4] = {1, 2, 3, 4};
  double expect[4] = {};
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) expect[r] += kHaar[r][k] * block[k];
  EXPECT_DOUBLE_EQ(expect[0], 5.0);
  EXPECT_DOUBLE_EQ(expect[1], -1.0);
  EXPECT_DOUBLE_EQ(expect[2], -2.0);
  EXPECT_DOUBLE_EQ(expect[3], 0.0);

  auto y = dwt_haar(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  for (int r = 0; r < 4; ++r) EXPECT_NEAR(y.tensor.values()[r], expect[r], 1e-12);
}

TEST(Dwt, RandomImageMatchesMatrixOracle) {
  auto x = random_image<double>({2, 2, 6, 4}, 9);
  auto y = dwt_haar(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
          const double blk[4] = {x.at(n, c, 2 * i, 2 * j), x.at(n, c, 2 * i, 2 * j + 1), x.at(n, c, 2 * i + 1, 2 * j),
                                 x.at(n, c, 2 * i + 1, 2 * j + 1)};
          for (std::size_t band = 0; band < 4; ++band) {
            double e = 0.0;
            for (int k = 0; k < 4; ++k) e += kHaar[band][k] * blk[k];
            EXPECT_NEAR(y.tensor.at(n, band * 2 + c, i, j), e, 1e-12);
          }
        }
}

TEST(Dwt, OddSizeIsRejected) {
  EXPECT_THROW(dwt_haar(Tensor<float>::zeros({1, 3, 7, 8})), ShapeError);
  EXPECT_THROW(dwt_haar(Tensor<float>::zeros({1, 3, 8, 5})), ShapeError);
}

TEST(Iwt, InvertsRandomImages) {
  auto x = random_image<float>({2, 3, 16, 16}, 3);
  EXPECT_LT(max_abs_diff(iwt_haar(dwt_haar(x)), x), 1e-5);
}

TEST(Iwt, ConstantSubbands) {
  std::vector<float> v(4 * 3 * 4 * 4, 0.0f);
  std::fill(v.begin(), v.begin() + 3 * 16, 8.0f);
  auto x = iwt_haar(SubbandTensor<float>{Tensor<float>({1, 12, 4, 4}, v)});
  EXPECT_EQ(x.shape(), (Shape{1, 3, 8, 8}));
  for (float p : x.values()) EXPECT_FLOAT_EQ(p, 4.0f);
}

TEST(Iwt, SingleBlock) {
  auto x = iwt_haar(SubbandTensor<double>{Tensor<double>({1, 4, 1, 1}, {5, -1, -2, 0})});
  const double expect[4] = {1, 2, 3, 4};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x.values()[i], expect[i], 1e-12);
}

TEST(Iwt, ChannelCountMustBeMultipleOfFour) {
  EXPECT_THROW(iwt_haar(SubbandTensor<float>{Tensor<float>::zeros({1, 6, 4, 4})}), ShapeError);
}

TEST(Subbands, ConstantImageLowBand) {
  auto ll = extract_ll(dwt_haar(Tensor<float>::full({1, 3, 8, 8}, 4.0f)));
  EXPECT_EQ(ll.shape(), (Shape{1, 3, 4, 4}));
  for (float v : ll.values()) EXPECT_FLOAT_EQ(v, 8.0f);
}

TEST(Subbands, LowBandIsTwiceAveragePool) {
  auto x = random_image<double>({2, 3, 10, 12}, 21);
  auto ll = extract_ll(dwt_haar(x));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
          const double pool = (x.at(n, c, 2 * i, 2 * j) + x.at(n, c, 2 * i, 2 * j + 1) + x.at(n, c, 2 * i + 1, 2 * j) +
                               x.at(n, c, 2 * i + 1, 2 * j + 1)) /
                              4.0;
          EXPECT_NEAR(ll.at(n, c, i, j), 2.0 * pool, 1e-12);
        }
}

TEST(Subbands, ChannelSlice) {
  SubbandTensor<float> s{Tensor<float>::zeros({1, 12, 64, 64})};
  EXPECT_EQ(extract_ll(s).shape(), (Shape{1, 3, 64, 64}));
  EXPECT_EQ(extract_subband(s, Subband::HH).shape(), (Shape{1, 3, 64, 64}));
}

TEST(Subbands, BandsAreOrderedSubbandMajor) {
  auto y = dwt_haar(Tensor<double>({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40}));
  EXPECT_NEAR(extract_subband(y, Subband::HL).values()[0], -1.0, 1e-12);
  EXPECT_NEAR(extract_subband(y, Subband::HL).values()[1], -10.0, 1e-12);
  EXPECT_NEAR(extract_subband(y, Subband::LH).values()[1], -20.0, 1e-12);
}

TEST(WaveletProperties, PerfectReconstruction) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Shape s{1 + rng() % 2, 1 + rng() % 3, 2 * (1 + rng() % 12), 2 * (1 + rng() % 12)};
    auto xf = random_image<float>(s, rng());
    auto xd = random_image<double>(s, rng(), -2.0, 2.0);
    EXPECT_LT(max_abs_diff(iwt_haar(dwt_haar(xf)), xf), 1e-5);
    EXPECT_LT(max_abs_diff(iwt_haar(dwt_haar(xd)), xd), 1e-12);
    // the synthesis matrix is the transpose, so dwt also inverts iwt
    SubbandTensor<double> sb{random_image<double>({s.batch, 4 * s.channels, s.height / 2, s.width / 2}, rng())};
    EXPECT_LT(max_abs_diff(dwt_haar(iwt_haar(sb)).tensor, sb.tensor), 1e-12);
  }
}

TEST(WaveletProperties, EnergyPreservation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_image<float>({1, 3, 16, 16}, seed);
    const double ex = energy(x), ey = energy(dwt_haar(x).tensor);
    EXPECT_LT(std::abs(ex - ey) / ex, 1e-5);
  }
}

TEST(WaveletProperties, Linearity) {
  auto x = random_image<float>({1, 3, 8, 8}, 1);
  auto y = random_image<float>({1, 3, 8, 8}, 2);
  const float a = 0.7f, b = -1.3f;
  auto lhs = dwt_haar(add(scale(x, a), scale(y, b))).tensor;
  auto rhs = add(scale(dwt_haar(x).tensor, a), scale(dwt_haar(y).tensor, b));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-5);
}

TEST(WaveletGradients, MatchFiniteDifferences) {
  auto x = random_image<double>({1, 2, 4, 4}, 31, -2.0, 2.0);
  auto wd = random_image<double>({1, 8, 2, 2}, 32, -2.0, 2.0);
  auto wi = random_image<double>({1, 2, 4, 4}, 33, -2.0, 2.0);
  EXPECT_LT(grad_check([&](const Tensor<double>& t) { return sum(square(mul(dwt_haar(t).tensor, wd))); }, x), 1e-4);
  auto sb = random_image<double>({1, 8, 2, 2}, 34, -2.0, 2.0);
  EXPECT_LT(grad_check([&](const Tensor<double>& t) { return sum(square(mul(iwt_haar(SubbandTensor<double>{t}), wi))); },
                       sb),
            1e-4);
}
