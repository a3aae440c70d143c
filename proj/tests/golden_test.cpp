#include <gtest/gtest.h>

#include <cstdlib>

#include "moldkit/container.hpp"
#include "moldkit/error.hpp"
#include "moldkit/golden.hpp"
#include "test_support.hpp"

namespace moldkit {
namespace {

TEST(Golden, SelfFixtureRoundTripsAndMatchesExactly) {
  testing::TempDir dir("golden");
  const auto config = ViTConfig::preset("toy");
  const auto weights = random_weights(config, 5);
  save_golden(dir / "g.safetensors", make_golden(weights, config, 17));
  const auto f = load_golden(dir / "g.safetensors");
  EXPECT_EQ(f.cls.shape(), (Shape{4, 8}));
  EXPECT_EQ(f.input.shape(), (Shape{3, 8, 8}));
  EXPECT_EQ(f.seed, 17u);
  const auto r = compare_golden(weights, f);
  EXPECT_EQ(r.max_abs, 0.0);
  EXPECT_EQ(r.per_layer_max_abs.size(), 4u);
  EXPECT_TRUE(r.within());
}

TEST(Golden, SameSeedGivesIdenticalBytes) {
  const auto config = ViTConfig::preset("toy");
  const auto weights = random_weights(config, 5);
  EXPECT_EQ(golden_to_container(make_golden(weights, config, 3)).serialize(),
            golden_to_container(make_golden(weights, config, 3)).serialize());
  EXPECT_NE(golden_to_container(make_golden(weights, config, 3)).serialize(),
            golden_to_container(make_golden(weights, config, 4)).serialize());
}

TEST(Golden, DetectsDeviationAboveTolerance) {
  const auto config = ViTConfig::preset("toy");
  const auto weights = random_weights(config, 5);
  auto f = make_golden(weights, config, 1);
  f.cls.at(2, 3) += 2e-3f;
  const auto r = compare_golden(weights, f);
  EXPECT_FALSE(r.within(1e-3));
  EXPECT_EQ(r.per_layer_max_abs[0], 0.0);
  EXPECT_NEAR(r.per_layer_max_abs[2], 2e-3, 1e-6);
}

TEST(Golden, MalformedFixturesRejected) {
  const auto config = ViTConfig::preset("toy");
  auto c = golden_to_container(make_golden(random_weights(config, 5), config, 1));
  TensorContainer no_cls;
  no_cls.put("input", golden_input(config, 1));
  no_cls.metadata() = c.metadata();
  EXPECT_THROW(golden_from_container(no_cls), DataError);

  auto wrong_shape = c;
  wrong_shape.put("cls", TensorF({3, 8}));
  EXPECT_THROW(golden_from_container(wrong_shape), DataError);

  auto no_config = c;
  no_config.metadata().erase("config");
  EXPECT_THROW(golden_from_container(no_config), DataError);
}

// Runs against an exporter-produced fixture when one is available:
// $MOLDKIT_GOLDEN_FIXTURE and $MOLDKIT_GOLDEN_WEIGHTS, else
// tests/fixtures/golden/{fixture,weights}.safetensors.
TEST(Golden, ExporterFixtureWithinTolerance) {
  const char* fx = std::getenv("MOLDKIT_GOLDEN_FIXTURE");
  const char* wt = std::getenv("MOLDKIT_GOLDEN_WEIGHTS");
  const std::filesystem::path dir = std::filesystem::path(MOLDKIT_TEST_DIR) / "fixtures" / "golden";
  const std::filesystem::path fixture = fx ? fx : dir / "fixture.safetensors";
  const std::filesystem::path weights = wt ? wt : dir / "weights.safetensors";
  if (!std::filesystem::exists(fixture) || !std::filesystem::exists(weights)) {
    GTEST_SKIP() << "no exporter fixture at " << fixture;
  }
  const auto f = load_golden(fixture);
  const auto r = compare_golden(load_weights(weights, f.config), f);
  EXPECT_TRUE(r.within(1e-3)) << "max abs " << r.max_abs << " vs " << f.source;
}

}  // namespace
}  // namespace moldkit
