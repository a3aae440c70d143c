#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "moldkit/mold.hpp"
#include "test_support.hpp"

namespace moldkit {
namespace {

using testing::random_features;
using testing::random_head;

// Gate forced onto layer k: zero second-layer weights and a bias that
// underflows every other softmax weight to exactly zero.
void force_one_hot_gate(MoldHead& head, std::size_t k) {
  head.gate_fc2_weight.fill(0.0);
  head.gate_fc2_bias.fill(-1e4);
  head.gate_fc2_bias[k] = 0.0;
}

TEST(MoldForward, OneHotGateSelectsLayerExactly) {
  std::mt19937_64 rng(1);
  const auto dims = MoldDims{4, 6, 3, 2};
  for (std::size_t k = 0; k < 4; ++k) {
    auto head = random_head(dims, rng);
    force_one_hot_gate(head, k);
    const auto t = forward(head, random_features(4, 6, rng));
    EXPECT_EQ(t.w[k], 1.0);
    EXPECT_EQ(t.h_fused, t.h[k]);
  }
}

TEST(MoldForward, IdenticalLayersGiveThatLayer) {
  std::mt19937_64 rng(2);
  const auto dims = MoldDims{3, 5, 4, 2};
  auto head = random_head(dims, rng);
  for (std::size_t i = 1; i < 3; ++i) {
    head.proj_weight[i] = head.proj_weight[0];
    head.proj_bias[i] = head.proj_bias[0];
  }
  auto f = random_features(3, 5, rng);
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k) f.per_layer_cls.at(i, k) = f.per_layer_cls.at(0, k);
  const auto t = forward(head, f);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(t.h_fused[j], t.h[0][j], 1e-12);
}

TEST(MoldForward, MatchesStraightLineOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto head = random_head({3, 4, 2, 2}, rng);
    const auto f = random_features(3, 4, rng);
    const auto t = forward(head, f);
    const auto o = oracle::mold_forward(testing::to_oracle(head), testing::to_oracle(f));
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(t.w[i], o.w[i], 1e-12);
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(t.h[i][j], o.h[i][j], 1e-12);
    }
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(t.h_fused[j], o.fused[j], 1e-12);
    EXPECT_NEAR(t.z, o.z, 1e-12);
    EXPECT_NEAR(t.y_hat, o.y_hat, 1e-12);
  }
}

TEST(MoldForward, DimensionMismatchThrows) {
  const auto head = MoldHead::initialize(MoldDims::defaults(3, 8), 0);
  std::mt19937_64 rng(4);
  EXPECT_THROW(forward(head, random_features(2, 8, rng)), DimensionError);
  EXPECT_THROW(forward(head, random_features(3, 7, rng)), DimensionError);
}

TEST(MoldForward, GateAlwaysOnSimplex) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const auto head = random_head({4, 3, 2, 2}, rng, 3.0);
    const auto t = forward(head, random_features(4, 3, rng, 3.0));
    double total = 0.0;
    for (double w : t.w) {
      EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_GE(t.y_hat, 0.0);
    EXPECT_LE(t.y_hat, 1.0);
  }
}

TEST(MoldForward, FusionIsLinearInProjectedFeaturesForFixedGates) {
  std::mt19937_64 rng(6);
  const auto head = random_head({3, 4, 3, 2}, rng);
  const auto t = forward(head, random_features(3, 4, rng));
  std::vector<std::vector<double>> h2 = t.h;
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : h2)
    for (auto& x : v) x = n(rng);
  auto fuse = [&](const std::vector<std::vector<double>>& h) {
    std::vector<double> out(3, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) out[j] += t.w[i] * h[i][j];
    return out;
  };
  const double a = 0.7, b = -1.3;
  std::vector<std::vector<double>> mix = t.h;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) mix[i][j] = a * t.h[i][j] + b * h2[i][j];
  const auto lhs = fuse(mix), f1 = fuse(t.h), f2 = fuse(h2);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(lhs[j], a * f1[j] + b * f2[j], 1e-12);
    EXPECT_NEAR(f1[j], t.h_fused[j], 1e-12);
  }
}

TEST(MoldLoss, KnownValues) {
  EXPECT_NEAR(bce_loss(0.5, 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(1.0 - 1e-7, 1), 1e-7, 1e-9);
  const std::vector<double> y_hat{0.5, 0.5};
  const std::vector<int> y{1, 0};
  EXPECT_NEAR(bce_loss_mean(y_hat, y), std::log(2.0), 1e-12);
}

TEST(MoldLoss, ClampAbsorbsSaturation) {
  EXPECT_TRUE(std::isfinite(bce_loss(0.0, 1)));
  EXPECT_TRUE(std::isfinite(bce_loss(1.0, 0)));
  EXPECT_NEAR(bce_loss(0.0, 1), -std::log(1e-7), 1e-9);
}

TEST(MoldLoss, BatchMeanIsPermutationInvariant) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> y_hat(32);
  std::vector<int> y(32);
  for (std::size_t i = 0; i < 32; ++i) {
    y_hat[i] = u(rng);
    y[i] = static_cast<int>(i % 2);
  }
  const double base = bce_loss_mean(y_hat, y);
  std::vector<std::size_t> perm(32);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> p2(32);
    std::vector<int> y2(32);
    for (std::size_t i = 0; i < 32; ++i) {
      p2[i] = y_hat[perm[i]];
      y2[i] = y[perm[i]];
    }
    EXPECT_NEAR(bce_loss_mean(p2, y2), base, 1e-12);
  }
}

TEST(MoldBackward, BiasGradientIsPredictionMinusLabel) {
  auto head = MoldHead::initialize({3, 4, 4, 1}, 8);
  head.classifier_bias[0] = std::log(3.0);  // W = 0, so ŷ = 0.75
  std::mt19937_64 rng(9);
  const auto f = random_features(3, 4, rng);
  const auto t = forward(head, f);
  ASSERT_NEAR(t.y_hat, 0.75, 1e-12);
  const auto g = backward(head, f, t, 1);
  EXPECT_NEAR(g.classifier_bias[0], -0.25, 1e-12);
}

TEST(MoldBackward, MatchesCentralDifferences) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> label(0, 1);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto head = random_head({3, 4, 2, 2}, rng);
    const auto f = random_features(3, 4, rng);
    const auto r = testing::grad_check(head, f, label(rng));
    worst = std::max(worst, r.max_relative_error);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(MoldBackward, SaturatedCorrectPredictionHasNoUpstreamGradient) {
  std::mt19937_64 rng(11);
  auto head = random_head({3, 4, 3, 2}, rng);
  head.classifier_weight.fill(0.0);
  head.classifier_bias[0] = 1000.0;  // ŷ == 1.0 exactly
  const auto f = random_features(3, 4, rng);
  const auto t = forward(head, f);
  ASSERT_EQ(t.y_hat, 1.0);
  const auto g = backward(head, f, t, 1);
  for (const auto& [name, tensor] : g.named_parameters()) {
    for (double v : tensor->values()) EXPECT_EQ(v, 0.0) << name;
  }
}

TEST(MoldPredict, TieClassifiesAsFake) {
  const auto head = MoldHead::initialize({2, 3, 3, 1}, 0);
  std::mt19937_64 rng(12);
  const auto p = predict(head, random_features(2, 3, rng));
  EXPECT_EQ(p.score, 0.5);
  EXPECT_EQ(p.label, 1);
}

TEST(MoldPredict, ScoreStrictlyMonotoneInBias) {
  std::mt19937_64 rng(13);
  auto head = random_head({3, 4, 3, 2}, rng);
  const auto f = random_features(3, 4, rng);
  double prev = -1.0;
  for (double b = -5.0; b <= 5.0; b += 0.5) {
    head.classifier_bias[0] = b;
    const double s = predict(head, f).score;
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(MoldInit, ClassifierStartsAtZeroAndInitIsSeeded) {
  const auto a = MoldHead::initialize(MoldDims::defaults(4, 16), 42);
  const auto b = MoldHead::initialize(MoldDims::defaults(4, 16), 42);
  const auto c = MoldHead::initialize(MoldDims::defaults(4, 16), 43);
  EXPECT_EQ(a.dims.shared_dim, 16u);
  EXPECT_EQ(a.dims.gate_hidden, 4u);
  for (double v : a.classifier_weight.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(a.classifier_bias[0], 0.0);
  EXPECT_EQ(a.proj_weight[0], b.proj_weight[0]);
  EXPECT_NE(a.proj_weight[0], c.proj_weight[0]);
  const double bound = 1.0 / std::sqrt(16.0);
  for (double v : a.proj_weight[2].values()) EXPECT_LE(std::abs(v), bound);
}

TEST(GatingStats, IdenticalHeadsHaveZeroSpread) {
  std::mt19937_64 rng(14);
  const auto head = random_head({4, 3, 2, 2}, rng);
  std::vector<LayerFeatureSet> probe;
  for (int i = 0; i < 20; ++i) probe.push_back(random_features(4, 3, rng));
  const std::vector<MoldHead> heads(3, head);
  const auto stats = gating_stats(heads, probe);
  const auto single = gating_stats(std::vector<MoldHead>{head}, probe);
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(stats.std[i], 0.0);
    EXPECT_EQ(single.std[i], 0.0);
    EXPECT_NEAR(stats.mean[i], single.mean[i], 1e-15);
    total += stats.mean[i];
  }
  EXPECT_NEAR(total, 1.0, 1e-5);
}

TEST(GatingStats, MeansStayOnSimplexAcrossDifferentHeads) {
  std::mt19937_64 rng(15);
  std::vector<MoldHead> heads;
  for (int s = 0; s < 3; ++s) heads.push_back(random_head({3, 4, 2, 2}, rng, 1.0));
  std::vector<LayerFeatureSet> probe;
  for (int i = 0; i < 10; ++i) probe.push_back(random_features(3, 4, rng));
  const auto stats = gating_stats(heads, probe);
  EXPECT_NEAR(std::accumulate(stats.mean.begin(), stats.mean.end(), 0.0), 1.0, 1e-5);
  EXPECT_THROW(gating_stats(heads, std::vector<LayerFeatureSet>{}), std::invalid_argument);
  EXPECT_THROW(gating_stats(std::vector<MoldHead>{}, probe), std::invalid_argument);
}

TEST(MoldCheckpoint, RoundTripIsExact) {
  testing::TempDir dir("mold-ckpt");
  std::mt19937_64 rng(16);
  const auto head = random_head({3, 4, 2, 2}, rng);
  save_mold_checkpoint(dir / "head.safetensors", head, {{"backbone_id", "synthetic"}, {"seed", 3}});
  const auto [back, sidecar] = load_mold_checkpoint(dir / "head.safetensors");
  EXPECT_EQ(back.dims, head.dims);
  for (std::size_t p = 0; p < head.named_parameters().size(); ++p) {
    EXPECT_EQ(*back.named_parameters()[p].second, *head.named_parameters()[p].second);
  }
  EXPECT_EQ(sidecar.at("backbone_id"), "synthetic");
  EXPECT_EQ(sidecar.at("d_s"), 2);
  EXPECT_EQ(sidecar.at("L"), 3);
}

}  // namespace
}  // namespace moldkit
