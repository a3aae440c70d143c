#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldkit/backbone.hpp"
#include "moldkit/dataset.hpp"
#include "moldkit/image.hpp"
#include "moldkit/metrics.hpp"
#include "moldkit/mold.hpp"
#include "moldkit/perturb.hpp"
#include "moldkit/train.hpp"

namespace moldkit {

enum class ProbeKind { linear, two_layer_gelu };

ProbeKind parse_probe_kind(const std::string& name);
std::string probe_kind_name(ProbeKind kind);

struct ProbeSpec {
  std::size_t layer = 1;       // 1-based; for groups, the group's last layer
  std::size_t group_size = 1;  // group covers [layer − group_size + 1, layer]
  ProbeKind kind = ProbeKind::linear;
  std::size_t hidden_dim = 0;  // two-layer hidden width, 0 = feature dim
  TrainConfig train_config{};

  void validate(std::size_t num_layers) const;
};

// Classifier over one layer's [CLS] feature.
//   linear:          z = w · f + b
//   two_layer_gelu:  z = w · GELU(f · W1 + b1) + b
struct ProbeModel {
  ProbeKind kind = ProbeKind::linear;
  std::size_t layer = 1;  // 1-based layer the probe reads
  std::size_t group_size = 1;
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  std::size_t hidden = 0;
  TensorD fc1_weight;  // [d, hidden] (two-layer only)
  TensorD fc1_bias;    // [hidden] (two-layer only)
  TensorD out_weight;  // [hidden] or [d]
  TensorD out_bias;    // [1]

  static ProbeModel create(const ProbeSpec& spec, std::size_t num_layers, std::size_t dim);
  ProbeModel zeros_like() const;

  std::string name() const;
  std::vector<std::pair<std::string, TensorD*>> named_parameters();
  std::vector<std::pair<std::string, const TensorD*>> named_parameters() const;
  std::vector<std::span<double>> parameters();

  double logit(const LayerFeatureSet& feats) const;
  double score(const LayerFeatureSet& feats) const;
  double accumulate_gradient(const LayerFeatureSet& feats, int label, ProbeModel& grad) const;
  std::size_t feature_layers() const { return num_layers; }
  std::size_t feature_dim() const { return dim; }
};

// Trains only the probe head on its layer's features with the mold training
// contract (Adam, early stopping on validation AP).
ProbeModel train_probe(const ProbeSpec& spec, const LabeledSet& train, const LabeledSet& val,
                       TrainingLog* log = nullptr);

EvalReport evaluate_probe(const ProbeModel& probe, const LabeledSet& eval);
EvalReport evaluate_head(const MoldHead& head, const LabeledSet& eval,
                         const std::vector<bool>& excluded_layers = {});

struct OverlapMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> error_ids;   // sorted misclassified sample indices
  std::vector<bool> empty_error_set;                 // flagged probes
  std::vector<std::vector<double>> jaccard;          // |A∩B| / |A∪B| (default report)
  std::vector<std::vector<double>> overlap_coefficient;  // |A∩B| / min(|A|, |B|)
  std::vector<std::vector<double>> fraction_of_test;     // |A∩B| / n_test
  std::vector<std::vector<std::size_t>> intersection;    // raw counts
  std::size_t test_size = 0;
};

// Builds every statistic from explicit error sets. Probes with an empty error
// set get 1 on the diagonal and 0 elsewhere.
OverlapMatrix overlap_from_error_sets(std::vector<std::string> names,
                                      std::vector<std::set<std::size_t>> errors,
                                      std::size_t test_size);
OverlapMatrix overlap_matrix(std::span<const ProbeModel> probes, const LabeledSet& test);

// CSV with a header row of probe names; `statistic` is "jaccard",
// "overlap_coefficient", "fraction_of_test" or "intersection".
std::string overlap_to_csv(const OverlapMatrix& m, const std::string& statistic = "jaccard");

// Evaluates a trained head with the gate logits of `excluded` (1-based) layers
// forced to −∞. Throws std::invalid_argument when every layer is excluded or
// an index is out of range.
EvalReport ablate_layers(const MoldHead& head, const std::set<std::size_t>& excluded,
                         const LabeledSet& eval);

struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
};

// How semantic_probe_eval picks cutmix partners.
enum class CutmixPartner { same_label_next, self };

struct SemanticTransform {
  PerturbationSpec spec;  // cutmix or jigsaw
  CutmixPartner partner = CutmixPartner::same_label_next;
};

// Index of the next image (cyclically) with the same label as image i, or i.
std::size_t same_label_partner(std::span<const int> labels, std::size_t i);

// Applies any perturbation (cutmix and jigsaw seeded per image as seed + i)
// and encodes every image with the frozen backbone.
LabeledSet encode_transformed(const ViTWeights& weights, const ViTConfig& config,
                              const SemanticTransform& transform, const LabeledImages& eval,
                              const PreprocessConfig& preprocess, unsigned threads = 1);

// Applies the label-preserving transform to every image, re-encodes with the
// frozen backbone and reports each probe's AP. Cutmix partners are the next
// image (cyclically) with the same label.
std::vector<EvalReport> semantic_probe_eval(std::span<const ProbeModel> probes,
                                            const ViTWeights& weights, const ViTConfig& config,
                                            const SemanticTransform& transform,
                                            const LabeledImages& eval,
                                            const PreprocessConfig& preprocess, unsigned threads = 1);

void save_probe_checkpoint(const std::filesystem::path& path, const ProbeModel& probe,
                           nlohmann::json sidecar);
std::pair<ProbeModel, nlohmann::json> load_probe_checkpoint(const std::filesystem::path& path);

}  // namespace moldkit
