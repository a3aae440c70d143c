#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "moldkit/tensor.hpp"
#include "oracles/oracles.hpp"

namespace moldkit {
namespace {

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto eye = TensorD::from_rows({{1, 0}, {0, 1}});
  const auto m = TensorD::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(eye, m), m);
}

TEST(Matmul, MatchesTripleLoop) {
  const auto a = TensorD::from_rows({{1, 2}, {3, 4}});
  const auto b = TensorD::from_rows({{5}, {6}});
  const auto c = matmul(a, b);
  // Oracle: triple loop gives [[17], [39]].
  const auto expected = oracle::matmul(a.values(), b.values(), 2, 2, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c[0], expected[0]);
  EXPECT_DOUBLE_EQ(c[1], expected[1]);
  EXPECT_DOUBLE_EQ(c[0], 17.0);
  EXPECT_DOUBLE_EQ(c[1], 39.0);
}

TEST(Matmul, ZeroRowAnnihilates) {
  const TensorF zeros({1, 3});
  const auto b = TensorF::from_rows({{1, 2}, {3, 4}, {5, 6}});
  const auto c = matmul(zeros, b);
  for (float v : c.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  const TensorD a({2, 3}), b({2, 2});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2, 3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2, 2]"), std::string::npos);
  }
}

TEST(Matmul, AssociativeOnRandomTensors) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    TensorF a({3, 4}), b({4, 5}), c({5, 2});
    for (auto* t : {&a, &b, &c})
      for (auto& v : t->values()) v = static_cast<float>(u(rng));
    const auto left = matmul(matmul(a, b), c);
    const auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      EXPECT_NEAR(left[i], right[i], 1e-5 * std::max(1.0f, std::abs(left[i])));
    }
  }
}

TEST(Softmax, EqualLogitsAreUniform) {
  for (double c : {-3.0, 0.0, 42.0}) {
    const std::vector<double> z(4, c);
    for (double p : softmax<double>(z)) EXPECT_NEAR(p, 0.25, 1e-12);
  }
}

TEST(Softmax, AnalyticTwoWay) {
  const std::vector<double> z{0.0, std::log(3.0)};
  const auto p = softmax<double>(z);
  EXPECT_NEAR(p[0], 0.25, 1e-12);
  EXPECT_NEAR(p[1], 0.75, 1e-12);
}

TEST(Softmax, ShiftInvariant) {
  const std::vector<double> z{0.3, -1.2, 2.5, 0.0};
  std::vector<double> shifted = z;
  for (auto& v : shifted) v += 100.0;
  const auto a = softmax<double>(z), b = softmax<double>(shifted);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-7);
}

TEST(Softmax, EmptyInputThrows) {
  EXPECT_THROW(softmax<double>(std::vector<double>{}), std::invalid_argument);
}

TEST(Softmax, AlwaysProbabilityVector) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 30.0);
  std::uniform_int_distribution<int> len(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> z(len(rng));
    for (auto& v : z) v = n(rng);
    const auto p = softmax<double>(z);
    double total = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Gelu, ZeroIsZero) { EXPECT_EQ(gelu(0.0), 0.0); }

TEST(Gelu, OneMatchesQuadratureOracle) {
  // x·Φ(x) with Φ by Simpson quadrature: 0.841345.
  EXPECT_NEAR(gelu(1.0), 1.0 * oracle::normal_cdf(1.0), 1e-9);
  EXPECT_NEAR(gelu(1.0), 0.841345, 1e-6);
}

TEST(Gelu, SaturatesForLargeInput) { EXPECT_NEAR(gelu(10.0), 10.0, 1e-6); }

TEST(Gelu, MonotoneOnEachSideOfMinimum) {
  // GELU has a single minimum near x ≈ -0.7518: nonincreasing left of it,
  // nondecreasing right of it.
  constexpr double x_min = -0.7517915;
  for (int i = 1; i <= 1000; ++i) {
    const double x0 = -5.0 + 10.0 * (i - 1) / 1000.0;
    const double x1 = -5.0 + 10.0 * i / 1000.0;
    if (x0 >= x_min) EXPECT_GE(gelu(x1), gelu(x0)) << x1;
    if (x1 <= x_min) EXPECT_LE(gelu(x1), gelu(x0)) << x1;
  }
}

TEST(Gelu, GradientMatchesCentralDifference) {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    const double numeric = (gelu(x + 1e-5) - gelu(x - 1e-5)) / 2e-5;
    EXPECT_NEAR(gelu_grad(x), numeric, 1e-7);
  }
}

TEST(LayerNorm, ConstantVectorCollapsesToBeta) {
  const std::vector<float> x(5, 3.0f), gamma(5, 1.0f), beta(5, 0.0f);
  for (float v : layernorm<float>(x, gamma, beta, 1e-5)) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNorm, AlreadyStandardized) {
  const std::vector<double> x{1, -1}, gamma{1, 1}, beta{0, 0};
  const auto y = layernorm<double>(x, gamma, beta, 1e-12);
  EXPECT_NEAR(y[0], 1.0, 1e-5);
  EXPECT_NEAR(y[1], -1.0, 1e-5);
}

TEST(LayerNorm, AffineAfterNormalization) {
  // mean 3, population variance 1 -> [-1, 1] -> 3·[-1, 1] + 1.
  const std::vector<double> x{2, 4}, gamma{3, 3}, beta{1, 1};
  const auto y = layernorm<double>(x, gamma, beta, 1e-12);
  EXPECT_NEAR(y[0], -2.0, 1e-9);
  EXPECT_NEAR(y[1], 4.0, 1e-9);
}

TEST(LayerNorm, StandardizesRandomInputs) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(5.0, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(64);
    for (auto& v : x) v = n(rng);
    const std::vector<double> gamma(64, 1.0), beta(64, 0.0);
    const auto y = layernorm<double>(x, gamma, beta, 1e-6);
    double mean = 0.0, var = 0.0;
    for (double v : y) mean += v;
    mean /= 64;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= 64;
    EXPECT_LE(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Sigmoid, KnownValues) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-12);
}

TEST(Sigmoid, SymmetricAndStableForLargeInputs) {
  for (double z : {-1000.0, -30.0, -1.5, 0.2, 7.0, 1000.0}) {
    const double a = sigmoid(z), b = sigmoid(-z);
    EXPECT_TRUE(std::isfinite(a));
    EXPECT_NEAR(a + b, 1.0, 1e-9);
  }
}

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(TensorF({2, 2}, std::vector<float>(3)), DimensionError);
  EXPECT_THROW(TensorF({0, 2}), DimensionError);
}

}  // namespace
}  // namespace moldkit
