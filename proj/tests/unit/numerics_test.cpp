#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "tgseg/numerics.hpp"

using namespace tgseg;

TEST(SpatialSoftmax, ZerosAreUniform) {
  const Grid2D out = numerics::spatial_softmax(Grid2D(3, 3));
  for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 9.0);
}

TEST(SpatialSoftmax, SaturatesOnHugeLogit) {
  Grid2D g(3, 3);
  g(1, 2) = 1e6;
  const Grid2D out = numerics::spatial_softmax(g);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) EXPECT_NEAR(out(y, x), (y == 1 && x == 2) ? 1.0 : 0.0, 1e-6);
}

TEST(SpatialSoftmax, MatchesExpOracle) {
  const Grid2D out = numerics::spatial_softmax(Grid2D(2, 2, {1, 2, 3, 4}));
  const auto expect = oracle::softmax({{1, 2}, {3, 4}});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) EXPECT_NEAR(out(y, x), expect[y][x], 1e-15);
}

TEST(SpatialSoftmax, RejectsNonFinite) {
  Grid2D g(2, 2);
  g(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    numerics::spatial_softmax(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
  }
  g(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(numerics::spatial_softmax(g), Error);
}

TEST(CosineSimilarity, Anchors) {
  const std::vector<double> u{0.3, -1.2, 2.5};
  const std::vector<double> neg{-0.3, 1.2, -2.5};
  EXPECT_NEAR(numerics::cosine_similarity(u, u), 1.0, 1e-15);
  EXPECT_NEAR(numerics::cosine_similarity(u, neg), -1.0, 1e-15);
  EXPECT_EQ(numerics::cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
}

TEST(CosineSimilarity, ZeroNormIsAnError) {
  const std::vector<double> z{0, 0, 0}, u{1, 2, 3};
  try {
    numerics::cosine_similarity(z, u);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_vector);
  }
  EXPECT_THROW(numerics::cosine_similarity(u, z), Error);
}

TEST(CosineSimilarity, MatchesOracleAndStaysInRange) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> u(7), v(7);
    oracle::fill_normal(rng, u);
    oracle::fill_normal(rng, v);
    const double c = numerics::cosine_similarity(u, v);
    EXPECT_NEAR(c, oracle::cosine(u, v), 1e-12);
    EXPECT_LE(std::abs(c), 1.0);
  }
}

TEST(CosineSimilarity, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  std::vector<double> u(6), v(6);
  oracle::fill_normal(rng, u);
  oracle::fill_normal(rng, v);
  std::vector<double> g(6, 0.0);
  numerics::cosine_similarity_grad_v(u, v, 1.0, g);
  const auto fd = oracle::finite_difference([&] { return oracle::cosine(u, v); }, v);
  EXPECT_LT(oracle::relative_error(g, fd), 1e-7);
}

TEST(BilinearResample, ConstantIsPreserved) {
  const Grid2D out = numerics::bilinear_resample(Grid2D(37, 37, 0.5), 256, 256);
  ASSERT_EQ(out.height(), 256);
  ASSERT_EQ(out.width(), 256);
  for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(BilinearResample, SameSizeIsIdentity) {
  Rng rng(1);
  Grid2D g(5, 7);
  oracle::fill_normal(rng, g.values());
  EXPECT_EQ(numerics::bilinear_resample(g, 5, 7), g);
}

TEST(BilinearResample, RampMatchesOracle) {
  const Grid2D g(2, 2, {0, 1, 0, 1});
  const Grid2D out = numerics::bilinear_resample(g, 4, 4);
  const Grid2D expect = oracle::bilinear(g, 4, 4);
  for (int y = 0; y < 4; ++y) {
    EXPECT_DOUBLE_EQ(out(y, 0), 0.0);
    EXPECT_DOUBLE_EQ(out(y, 1), 0.25);
    EXPECT_DOUBLE_EQ(out(y, 2), 0.75);
    EXPECT_DOUBLE_EQ(out(y, 3), 1.0);
    for (int x = 0; x < 4; ++x) EXPECT_NEAR(out(y, x), expect(y, x), 1e-15);
  }
}

TEST(BilinearResample, RandomGridsMatchOracle) {
  Rng rng(9);
  for (auto [ih, iw, oh, ow] : {std::array{8, 8, 256, 256}, {5, 3, 11, 2}, {16, 16, 4, 4}, {1, 6, 3, 9}}) {
    Grid2D g(ih, iw);
    oracle::fill_normal(rng, g.values());
    const Grid2D out = numerics::bilinear_resample(g, oh, ow);
    const Grid2D expect = oracle::bilinear(g, oh, ow);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out.values()[i], expect.values()[i], 1e-12);
  }
}

TEST(BilinearResample, FeatureMapResamplesEachChannel) {
  Rng rng(2);
  FeatureMap m(3, 4, 2);
  oracle::fill_normal(rng, m.data());
  const FeatureMap out = numerics::bilinear_resample(m, 7, 5);
  for (int c = 0; c < 2; ++c) {
    const Grid2D expect = oracle::bilinear(m.channel(c), 7, 5);
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 5; ++x) EXPECT_NEAR(out.at(y, x, c), expect(y, x), 1e-12);
  }
}

TEST(BilinearResample, AdjointSatisfiesInnerProductIdentity) {
  Rng rng(4);
  Grid2D a(6, 5), b(13, 9);
  oracle::fill_normal(rng, a.values());
  oracle::fill_normal(rng, b.values());
  const Grid2D ra = numerics::bilinear_resample(a, 13, 9);
  const Grid2D tb = numerics::bilinear_resample_adjoint(b, 6, 5);
  EXPECT_NEAR(numerics::dot(ra.values(), b.values()), numerics::dot(a.values(), tb.values()), 1e-10);
}
