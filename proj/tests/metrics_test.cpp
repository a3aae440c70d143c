#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "moldkit/error.hpp"
#include "moldkit/metrics.hpp"
#include "oracles/oracles.hpp"

namespace moldkit {
namespace {

TEST(AveragePrecision, HandExample) {
  const std::vector<double> s{0.9, 0.8, 0.7};
  const std::vector<int> y{1, 0, 1};
  EXPECT_NEAR(average_precision(s, y), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
}

TEST(AveragePrecision, PerfectRankingIsOne) {
  const std::vector<double> s{0.1, 0.95, 0.2, 0.9};
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_EQ(average_precision(s, y), 1.0);
}

TEST(AveragePrecision, UndefinedWithoutBothClasses) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(average_precision(s, std::vector<int>{1, 1}), UndefinedMetric);
  EXPECT_THROW(average_precision(s, std::vector<int>{0, 0}), UndefinedMetric);
  EXPECT_THROW(average_precision(s, std::vector<int>{1}), std::invalid_argument);
}

TEST(AveragePrecision, TiesKeepInputOrder) {
  // Equal scores: the earlier sample ranks first.
  const std::vector<double> s{0.5, 0.5};
  EXPECT_EQ(average_precision(s, std::vector<int>{1, 0}), 1.0);
  EXPECT_EQ(average_precision(s, std::vector<int>{0, 1}), 0.5);
}

TEST(AveragePrecision, MatchesDefinitionOnEveryLabelPatternUpToEight) {
  std::mt19937_64 rng(0);
  std::size_t checked = 0;
  for (std::size_t n = 2; n <= 8; ++n) {
    std::vector<double> scores(n);
    std::iota(scores.begin(), scores.end(), 1.0);
    for (int order = 0; order < 3; ++order) {
      std::shuffle(scores.begin(), scores.end(), rng);
      for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1u;
        ASSERT_NEAR(average_precision(scores, labels), oracle::average_precision(scores, labels), 1e-12);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 700u);
}

TEST(AveragePrecision, InvariantUnderStrictlyMonotoneTransforms) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(40), t1(40), t2(40);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
      s[i] = n(rng);
      y[i] = static_cast<int>(i % 2);
      t1[i] = 1.0 / (1.0 + std::exp(-s[i]));
      t2[i] = 3.0 * s[i] * s[i] * s[i] + 7.0;
    }
    const double ap = average_precision(s, y);
    EXPECT_NEAR(average_precision(t1, y), ap, 1e-12);
    EXPECT_NEAR(average_precision(t2, y), ap, 1e-12);
  }
}

TEST(Accuracy, Examples) {
  EXPECT_NEAR(accuracy(std::vector<double>{0.6, 0.4, 0.5}, std::vector<int>{1, 1, 0}), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(accuracy(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_EQ(accuracy(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}), 0.0);
  EXPECT_THROW(accuracy(std::vector<double>{}, std::vector<int>{}), std::invalid_argument);
}

TEST(Accuracy, ComplementaryLabelsSumToOne) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(25);
    std::vector<int> y(25), flipped(25);
    for (std::size_t i = 0; i < 25; ++i) {
      do s[i] = u(rng); while (s[i] == 0.5);
      y[i] = u(rng) < 0.5;
      flipped[i] = 1 - y[i];
    }
    EXPECT_NEAR(accuracy(s, y) + accuracy(s, flipped), 1.0, 1e-12);
  }
}

TEST(Aggregate, UnweightedMeans) {
  SubsetResult a{"a", 0.8, 1.0, 10, 10}, b{"b", 0.6, 0.0, 1, 99};
  const auto single = aggregate({a});
  EXPECT_EQ(single.mean_accuracy, 0.8);
  EXPECT_EQ(single.mean_ap, 1.0);
  const auto both = aggregate({a, b});
  EXPECT_NEAR(both.mean_accuracy, 0.7, 1e-12);
  EXPECT_EQ(both.mean_ap, 0.5);
  EXPECT_THROW(aggregate({}), std::invalid_argument);
}

std::vector<SubsetResult> rows(const std::vector<std::string>& names, const std::vector<double>& pairs) {
  std::vector<SubsetResult> out;
  for (std::size_t i = 0; i < names.size(); ++i)
    out.push_back({names[i], pairs[2 * i] / 100.0, pairs[2 * i + 1] / 100.0, 1, 1});
  return out;
}

// Published per-subset values are rounded to one decimal, so the recomputed
// means can differ from the printed ones by up to 0.1 points.
TEST(Aggregate, ReproducesPublishedGenImageMeans) {
  const auto r = aggregate(rows({"ADM", "BigGAN", "GLIDE", "Midjourney", "SDv1.4", "SDv1.5", "VQDM", "Wukong"},
                                {99.3, 100.0, 83.3, 97.9, 91.1, 99.0, 76.3, 95.2, 88.2, 98.5, 87.0, 98.3,
                                 93.5, 99.2, 86.5, 98.1}));
  EXPECT_NEAR(100.0 * r.mean_accuracy, 88.2, 0.1);
  EXPECT_NEAR(100.0 * r.mean_ap, 98.2, 0.1);
}

TEST(Aggregate, ReproducesPublishedForenSynthsMeans) {
  const auto r = aggregate(rows({"s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8"},
                                {99.9, 100.0, 91.1, 99.8, 86.0, 99.8, 98.4, 100.0, 98.1, 99.9, 99.1,
                                 100.0, 99.7, 100.0, 58.7, 96.5}));
  EXPECT_NEAR(100.0 * r.mean_accuracy, 91.4, 0.05);
  EXPECT_NEAR(100.0 * r.mean_ap, 99.5, 0.05);
}

TEST(EvaluateBySubset, GroupsInFirstAppearanceOrder) {
  const std::vector<double> s{0.9, 0.1, 0.8, 0.2, 0.3, 0.7};
  const std::vector<int> y{1, 0, 1, 0, 1, 0};
  const std::vector<std::string> tags{"b", "b", "a", "a", "b", "a"};
  const auto r = evaluate_by_subset(s, y, tags);
  ASSERT_EQ(r.subsets.size(), 2u);
  EXPECT_EQ(r.subsets[0].name, "b");
  EXPECT_EQ(r.subsets[0].n_fake, 2u);
  EXPECT_EQ(r.subsets[0].n_real, 1u);
  EXPECT_NEAR(r.mean_ap, (r.subsets[0].average_precision + r.subsets[1].average_precision) / 2, 1e-15);
}

TEST(EvalReport, JsonAndCsv) {
  const auto r = aggregate({{"ADM", 0.993, 1.0, 5, 5}, {"BigGAN", 0.833, 0.979, 5, 5}});
  const nlohmann::json j = r;
  const auto back = j.get<EvalReport>();
  EXPECT_EQ(back.subsets.size(), 2u);
  EXPECT_EQ(back.mean_ap, r.mean_ap);
  const auto csv = report_to_csv(r, "MoLD");
  EXPECT_EQ(csv,
            "Method,ADM ACC,ADM AP,BigGAN ACC,BigGAN AP,Mean ACC,Mean AP\n"
            "MoLD,99.3,100.0,83.3,97.9,91.3,99.0\n");
}

}  // namespace
}  // namespace moldkit
