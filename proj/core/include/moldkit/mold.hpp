#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldkit/backbone.hpp"
#include "moldkit/dataset.hpp"
#include "moldkit/tensor.hpp"

namespace moldkit {

struct MoldDims {
  std::size_t layers = 0;       // L
  std::size_t feature_dim = 0;  // d
  std::size_t shared_dim = 0;   // d_s
  std::size_t gate_hidden = 0;  // d_g

  // d_s = d and d_g = max(1, d / 4).
  static MoldDims defaults(std::size_t layers, std::size_t feature_dim);
  bool operator==(const MoldDims&) const = default;
};

// Gated mixture over per-layer features:
//   h_i     = GELU(f_i · P_i + c_i)                 per-layer projection
//   w       = softmax(G2 · GELU(f_L · G1 + g1) + g2) gate over layers
//   h_fused = Σ_i w_i h_i
//   z       = W · h_fused + b,  ŷ = σ(z)
// The same struct carries gradients (same shapes).
struct MoldHead {
  MoldDims dims;
  std::vector<TensorD> proj_weight;  // L × [d, d_s]
  std::vector<TensorD> proj_bias;    // L × [d_s]
  TensorD gate_fc1_weight;           // [d, d_g]
  TensorD gate_fc1_bias;             // [d_g]
  TensorD gate_fc2_weight;           // [d_g, L]
  TensorD gate_fc2_bias;             // [L]
  TensorD classifier_weight;         // [d_s]
  TensorD classifier_bias;           // [1]

  static MoldHead zeros(const MoldDims& dims);
  // Projections and gate ~ U(−1/√fan_in, 1/√fan_in); classifier starts at zero.
  static MoldHead initialize(const MoldDims& dims, std::uint64_t seed);

  MoldHead zeros_like() const { return zeros(dims); }

  // Canonical (name, tensor) order shared by the optimizer, checkpoints and
  // gradient checks.
  std::vector<std::pair<std::string, TensorD*>> named_parameters();
  std::vector<std::pair<std::string, const TensorD*>> named_parameters() const;
  std::vector<std::span<double>> parameters();

  // TrainableHead interface.
  double score(const LayerFeatureSet& feats) const;
  double accumulate_gradient(const LayerFeatureSet& feats, int label, MoldHead& grad) const;
  std::size_t feature_layers() const { return dims.layers; }
  std::size_t feature_dim() const { return dims.feature_dim; }
};

using MoldGradients = MoldHead;

// Every intermediate of one forward pass.
struct ForwardTrace {
  std::vector<std::vector<double>> proj_pre;  // L × d_s, before GELU
  std::vector<std::vector<double>> h;         // L × d_s
  std::vector<double> gate_pre;               // d_g, before GELU
  std::vector<double> gate_hidden;            // d_g
  std::vector<double> gate_logits;            // L (−∞ for masked layers)
  std::vector<double> w;                      // L
  std::vector<double> h_fused;                // d_s
  double z = 0.0;
  double y_hat = 0.5;
};

// excluded_layers, when non-empty, holds one flag per layer; flagged layers
// get a −∞ gate logit so the softmax renormalizes over the rest.
ForwardTrace forward(const MoldHead& head, const LayerFeatureSet& feats,
                     const std::vector<bool>& excluded_layers = {});

constexpr double kProbabilityClamp = 1e-7;

// Binary cross-entropy with ŷ clamped to [1e-7, 1 − 1e-7].
double bce_loss(double y_hat, int label);
double bce_loss_mean(std::span<const double> y_hat, std::span<const int> labels);

// Adds the gradient of bce_loss(trace.y_hat, label) w.r.t. every head
// parameter into `grad`.
void backward(const MoldHead& head, const LayerFeatureSet& feats, const ForwardTrace& trace,
              int label, MoldGradients& grad);
MoldGradients backward(const MoldHead& head, const LayerFeatureSet& feats,
                       const ForwardTrace& trace, int label);

struct Prediction {
  double score = 0.5;
  int label = 1;  // score >= 0.5
};

Prediction predict(const MoldHead& head, const LayerFeatureSet& feats,
                   const std::vector<bool>& excluded_layers = {});

struct GateStats {
  std::vector<double> mean;  // per layer
  std::vector<double> std;   // population std across heads
};

// Per-head average gate over the probe set, then mean/std across heads.
GateStats gating_stats(std::span<const MoldHead> heads, std::span<const LayerFeatureSet> probe_set);

// Checkpoint: tensor container at `path` (F64 payloads) plus JSON sidecar at
// `path` + ".json". The sidecar always carries L, d, d_s, d_g.
void save_mold_checkpoint(const std::filesystem::path& path, const MoldHead& head,
                          nlohmann::json sidecar);
std::pair<MoldHead, nlohmann::json> load_mold_checkpoint(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace moldkit
