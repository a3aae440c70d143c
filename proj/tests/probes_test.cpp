#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "moldkit/probes.hpp"
#include "moldkit/synth.hpp"
#include "test_support.hpp"

namespace moldkit {
namespace {

// Synthetic splits hold only ~16 batches, so probes use a larger step than
// the library default.
ProbeSpec layer_probe(std::size_t layer, ProbeKind kind = ProbeKind::linear) {
  ProbeSpec s;
  s.layer = layer;
  s.kind = kind;
  s.train_config.learning_rate = 1e-3;
  return s;
}

TEST(ProbeSpec, Validation) {
  EXPECT_NO_THROW(layer_probe(4).validate(4));
  EXPECT_THROW(layer_probe(0).validate(4), std::invalid_argument);
  EXPECT_THROW(layer_probe(5).validate(4), std::invalid_argument);
  ProbeSpec g = layer_probe(2);
  g.group_size = 3;
  EXPECT_THROW(g.validate(4), std::invalid_argument);
  g.layer = 3;
  EXPECT_NO_THROW(g.validate(4));
  EXPECT_EQ(parse_probe_kind("two-layer"), ProbeKind::two_layer_gelu);
  EXPECT_EQ(parse_probe_kind("linear"), ProbeKind::linear);
  EXPECT_THROW(parse_probe_kind("mlp"), std::invalid_argument);
}

TEST(ProbeModel, GroupProbeReadsLastLayerOfGroup) {
  ProbeSpec g = layer_probe(3);
  g.group_size = 3;
  const auto p = ProbeModel::create(g, 4, 2);
  EXPECT_EQ(p.layer, 3u);
  std::mt19937_64 rng(0);
  auto f = testing::random_features(4, 2, rng);
  auto probe = p;
  probe.out_weight[0] = 1.0;
  const double before = probe.logit(f);
  f.per_layer_cls.at(0, 0) += 5.0f;
  f.per_layer_cls.at(1, 0) += 5.0f;
  EXPECT_EQ(probe.logit(f), before);
  f.per_layer_cls.at(2, 0) += 5.0f;
  EXPECT_NE(probe.logit(f), before);
}

TEST(ProbeModel, TwoLayerGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.5);
  auto spec = layer_probe(2, ProbeKind::two_layer_gelu);
  spec.hidden_dim = 3;
  for (int trial = 0; trial < 10; ++trial) {
    auto probe = ProbeModel::create(spec, 3, 4);
    for (auto& [name, t] : probe.named_parameters())
      for (auto& v : t->values()) v = n(rng);
    const auto f = testing::random_features(3, 4, rng);
    const int y = trial % 2;
    auto grad = probe.zeros_like();
    probe.accumulate_gradient(f, y, grad);
    auto params = probe.named_parameters();
    const auto grads = grad.named_parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& values = params[p].second->values();
      for (std::size_t e = 0; e < values.size(); ++e) {
        const double numeric = oracle::central_difference(values, e, 1e-5, [&] {
          return oracle::bce(oracle::sigmoid(probe.logit(f)), y);
        });
        EXPECT_LT(testing::relative_error(grads[p].second->values()[e], numeric), 1e-5) << params[p].first;
      }
    }
  }
}

TEST(TrainProbe, PlantedLayerSeparatesOthersDoNot) {
  const auto data = synth_generate(4, 16, 500, 2, 4.0, 0);
  for (std::size_t layer = 1; layer <= 4; ++layer) {
    const auto probe = train_probe(layer_probe(layer), data.train, data.val);
    const double ap = evaluate_probe(probe, data.test).mean_ap;
    if (layer == 2) {
      EXPECT_GT(ap, 0.99) << layer;
    } else {
      EXPECT_NEAR(ap, 0.5, 0.1) << layer;
    }
  }
}

TEST(TrainProbe, OneDimensionalSeparableConvergesToPerfectAp) {
  LabeledSet set;
  for (int i = 0; i < 8; ++i) {
    LayerFeatureSet f;
    f.per_layer_cls = TensorF({1, 1});
    f.per_layer_cls.at(0, 0) = i % 2 ? 1.0f : -1.0f;
    set.push_back(f, i % 2);
  }
  const auto probe = train_probe(layer_probe(1), set, set);
  EXPECT_EQ(evaluate_probe(probe, set).mean_ap, 1.0);
}

TEST(TrainProbe, LayerOutOfRangeThrows) {
  const auto data = synth_generate(3, 4, 10, 2, 4.0, 0);
  EXPECT_THROW(train_probe(layer_probe(4), data.train, data.val), std::invalid_argument);
}

TEST(Overlap, HandExamples) {
  auto m = overlap_from_error_sets({"a", "b"}, {{1, 2, 3}, {3, 4}}, 10);
  EXPECT_NEAR(m.jaccard[0][1], 0.25, 1e-15);
  EXPECT_NEAR(m.overlap_coefficient[0][1], 0.5, 1e-15);
  EXPECT_NEAR(m.fraction_of_test[0][1], 0.1, 1e-15);
  EXPECT_EQ(m.intersection[0][1], 1u);
  EXPECT_EQ(m.jaccard[0][0], 1.0);

  m = overlap_from_error_sets({"a", "b"}, {{1, 2}, {1, 2}}, 5);
  EXPECT_EQ(m.jaccard[0][1], 1.0);
  m = overlap_from_error_sets({"a", "b"}, {{1, 2}, {3}}, 5);
  EXPECT_EQ(m.jaccard[0][1], 0.0);
}

TEST(Overlap, EmptyErrorSetsAreFlaggedWithSentinel) {
  const auto m = overlap_from_error_sets({"a", "b", "c"}, {{}, {}, {1}}, 4);
  EXPECT_TRUE(m.empty_error_set[0]);
  EXPECT_TRUE(m.empty_error_set[1]);
  EXPECT_FALSE(m.empty_error_set[2]);
  EXPECT_EQ(m.jaccard[0][0], 1.0);
  EXPECT_EQ(m.jaccard[0][1], 0.0);
  EXPECT_EQ(m.jaccard[0][2], 0.0);
}

TEST(Overlap, MatrixPropertiesOnRandomSets) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::set<std::size_t>> errors(4);
    for (auto& e : errors)
      for (std::size_t i = 0; i < 20; ++i)
        if (coin(rng)) e.insert(i);
    const auto m = overlap_from_error_sets({"a", "b", "c", "d"}, errors, 20);
    for (std::size_t a = 0; a < 4; ++a) {
      if (!errors[a].empty()) EXPECT_EQ(m.jaccard[a][a], 1.0);
      for (std::size_t b = 0; b < 4; ++b) {
        EXPECT_EQ(m.jaccard[a][b], m.jaccard[b][a]);
        EXPECT_GE(m.jaccard[a][b], 0.0);
        EXPECT_LE(m.jaccard[a][b], 1.0);
      }
    }
  }
}

TEST(Overlap, MatrixFromProbesAndCsv) {
  const auto data = synth_generate(3, 4, 30, 2, 1.0, 5);
  const auto p = train_probe(layer_probe(2), data.train, data.val);
  const std::vector<ProbeModel> probes{p, p};
  const auto m = overlap_matrix(probes, data.test);
  EXPECT_EQ(m.jaccard[0][1], 1.0);
  EXPECT_EQ(m.test_size, data.test.size());
  const auto csv = overlap_to_csv(m);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "probe,layer2,layer2");
  EXPECT_THROW(overlap_matrix(probes, LabeledSet{}), std::invalid_argument);
  EXPECT_THROW(overlap_matrix(std::span(probes).first(1), data.test), std::invalid_argument);
}

TEST(Ablate, EmptyExclusionEqualsPlainEvaluation) {
  std::mt19937_64 rng(6);
  const auto head = testing::random_head({3, 4, 2, 2}, rng);
  const auto data = synth_generate(3, 4, 20, 2, 1.0, 6);
  const auto plain = evaluate_head(head, data.test);
  const auto ablated = ablate_layers(head, {}, data.test);
  EXPECT_EQ(plain.mean_ap, ablated.mean_ap);
  EXPECT_EQ(plain.mean_accuracy, ablated.mean_accuracy);
}

TEST(Ablate, ZeroMassLayerChangesNothing) {
  std::mt19937_64 rng(7);
  auto head = testing::random_head({3, 4, 2, 2}, rng);
  head.gate_fc2_weight.fill(0.0);
  head.gate_fc2_bias[0] = 0.3;
  head.gate_fc2_bias[1] = -0.2;
  head.gate_fc2_bias[2] = -1e4;  // w_3 == 0 for every input
  const auto data = synth_generate(3, 4, 20, 2, 1.0, 7);
  for (const auto& f : data.test.features) {
    const double plain = predict(head, f).score;
    const double masked = predict(head, f, {false, false, true}).score;
    EXPECT_NEAR(plain, masked, 1e-6);
    // Argmax among survivors is unchanged.
    const auto t0 = forward(head, f), t1 = forward(head, f, {false, false, true});
    EXPECT_EQ(std::max_element(t0.w.begin(), t0.w.begin() + 2) - t0.w.begin(),
              std::max_element(t1.w.begin(), t1.w.begin() + 2) - t1.w.begin());
  }
}

TEST(Ablate, RejectsInvalidExclusions) {
  const auto head = MoldHead::initialize(MoldDims::defaults(3, 4), 0);
  const auto data = synth_generate(3, 4, 5, 2, 1.0, 8);
  EXPECT_THROW(ablate_layers(head, {1, 2, 3}, data.test), std::invalid_argument);
  EXPECT_THROW(ablate_layers(head, {0}, data.test), std::invalid_argument);
  EXPECT_THROW(ablate_layers(head, {4}, data.test), std::invalid_argument);
}

TEST(ProbeCheckpoint, RoundTripIsExact) {
  testing::TempDir dir("probe-ckpt");
  auto spec = layer_probe(2, ProbeKind::two_layer_gelu);
  spec.hidden_dim = 3;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  auto probe = ProbeModel::create(spec, 3, 4);
  for (auto& [name, t] : probe.named_parameters())
    for (auto& v : t->values()) v = n(rng);
  save_probe_checkpoint(dir / "p.safetensors", probe, {{"backbone_id", "x"}});
  const auto [back, sidecar] = load_probe_checkpoint(dir / "p.safetensors");
  EXPECT_EQ(back.kind, probe.kind);
  EXPECT_EQ(back.layer, 2u);
  EXPECT_EQ(back.hidden, 3u);
  EXPECT_EQ(back.fc1_weight, probe.fc1_weight);
  EXPECT_EQ(back.out_weight, probe.out_weight);
  EXPECT_EQ(sidecar.at("backbone_id"), "x");
}

struct SemanticFixture : ::testing::Test {
  ViTConfig config = ViTConfig::preset("toy-32");
  ViTWeights weights = random_weights(config, 0);
  PreprocessConfig pre{};
  LabeledImages train, val, test;
  std::vector<ProbeModel> probes;

  void SetUp() override {
    pre.size = config.image_size;
    auto load = [&](std::uint64_t seed) {
      SynthImageSpec spec;
      spec.n_per_class = 48;
      spec.seed = seed;
      auto imgs = synth_images(spec);
      return LabeledImages{std::move(imgs.images), std::move(imgs.labels)};
    };
    train = load(1);
    val = load(2);
    test = load(3);
    SemanticTransform none;
    const auto tr = encode_transformed(weights, config, none, train, pre);
    const auto va = encode_transformed(weights, config, none, val, pre);
    for (std::size_t layer = 1; layer <= config.num_layers; ++layer) {
      probes.push_back(train_probe(layer_probe(layer), tr, va));
    }
  }

  std::vector<double> clean_aps() const {
    const auto set = encode_transformed(weights, config, {}, test, pre);
    std::vector<double> aps;
    for (const auto& p : probes) aps.push_back(evaluate_probe(p, set).mean_ap);
    return aps;
  }
};

TEST_F(SemanticFixture, IdentityTransformsLeaveApUnchanged) {
  const auto clean = clean_aps();
  const auto jig = semantic_probe_eval(probes, weights, config, {PerturbationSpec::jigsaw_grid(1, 5)}, test, pre);
  const auto self = semantic_probe_eval(
      probes, weights, config, {PerturbationSpec::cutmix_box(0.4, 5), CutmixPartner::self}, test, pre);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    EXPECT_EQ(jig[i].mean_ap, clean[i]);
    EXPECT_EQ(self[i].mean_ap, clean[i]);
  }
}

TEST_F(SemanticFixture, TileAlignedJigsawPreservesLocationInvariantSignal) {
  // 8-pixel tiles hold whole grating periods, so only the smooth background moves.
  const auto clean = clean_aps();
  const auto jig = semantic_probe_eval(probes, weights, config, {PerturbationSpec::jigsaw_grid(4, 9)}, test, pre);
  for (std::size_t i = 0; i < probes.size(); ++i) EXPECT_NEAR(jig[i].mean_ap, clean[i], 0.02) << i;
}

TEST_F(SemanticFixture, RejectsNonSemanticTransforms) {
  EXPECT_THROW(semantic_probe_eval(probes, weights, config, {PerturbationSpec::blur(1.0)}, test, pre),
               std::invalid_argument);
  EXPECT_EQ(same_label_partner(std::vector<int>{0, 1, 1, 0}, 0), 3u);
  EXPECT_EQ(same_label_partner(std::vector<int>{0, 1}, 1), 1u);
}

}  // namespace
}  // namespace moldkit
