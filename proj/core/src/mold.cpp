#include "moldkit/mold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "moldkit/container.hpp"

namespace moldkit {

void LabeledSet::validate(std::size_t layers, std::size_t dim) const {
  if (labels.size() != features.size()) {
    throw std::invalid_argument("features and labels differ in length");
  }
  if (!subsets.empty() && subsets.size() != features.size()) {
    throw std::invalid_argument("subset tags and features differ in length");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("labels must be 0 or 1");
    if (features[i].num_layers() != layers || features[i].dim() != dim) {
      throw DimensionError("sample " + std::to_string(i) + " has feature shape " +
                           shape_string(features[i].per_layer_cls.shape()) + ", expected [" +
                           std::to_string(layers) + ", " + std::to_string(dim) + "]");
    }
  }
}

std::string LabeledSet::subset_of(std::size_t i) const {
  if (i < subsets.size() && !subsets[i].empty()) return subsets[i];
  return "all";
}

MoldDims MoldDims::defaults(std::size_t layers, std::size_t feature_dim) {
  return {layers, feature_dim, feature_dim, std::max<std::size_t>(1, feature_dim / 4)};
}

MoldHead MoldHead::zeros(const MoldDims& dims) {
  if (dims.layers == 0 || dims.feature_dim == 0 || dims.shared_dim == 0 || dims.gate_hidden == 0) {
    throw std::invalid_argument("MoldHead dimensions must be positive");
  }
  MoldHead h;
  h.dims = dims;
  for (std::size_t i = 0; i < dims.layers; ++i) {
    h.proj_weight.emplace_back(Shape{dims.feature_dim, dims.shared_dim});
    h.proj_bias.emplace_back(Shape{dims.shared_dim});
  }
  h.gate_fc1_weight = TensorD({dims.feature_dim, dims.gate_hidden});
  h.gate_fc1_bias = TensorD({dims.gate_hidden});
  h.gate_fc2_weight = TensorD({dims.gate_hidden, dims.layers});
  h.gate_fc2_bias = TensorD({dims.layers});
  h.classifier_weight = TensorD({dims.shared_dim});
  h.classifier_bias = TensorD({1});
  return h;
}

MoldHead MoldHead::initialize(const MoldDims& dims, std::uint64_t seed) {
  MoldHead h = zeros(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&](TensorD& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.values()) v = u(rng);
  };
  for (std::size_t i = 0; i < dims.layers; ++i) {
    fill(h.proj_weight[i], dims.feature_dim);
    fill(h.proj_bias[i], dims.feature_dim);
  }
  fill(h.gate_fc1_weight, dims.feature_dim);
  fill(h.gate_fc1_bias, dims.feature_dim);
  fill(h.gate_fc2_weight, dims.gate_hidden);
  fill(h.gate_fc2_bias, dims.gate_hidden);
  return h;
}

std::vector<std::pair<std::string, TensorD*>> MoldHead::named_parameters() {
  std::vector<std::pair<std::string, TensorD*>> out;
  for (std::size_t i = 0; i < dims.layers; ++i) {
    out.emplace_back("proj." + std::to_string(i) + ".weight", &proj_weight[i]);
    out.emplace_back("proj." + std::to_string(i) + ".bias", &proj_bias[i]);
  }
  out.emplace_back("gate.fc1.weight", &gate_fc1_weight);
  out.emplace_back("gate.fc1.bias", &gate_fc1_bias);
  out.emplace_back("gate.fc2.weight", &gate_fc2_weight);
  out.emplace_back("gate.fc2.bias", &gate_fc2_bias);
  out.emplace_back("classifier.weight", &classifier_weight);
  out.emplace_back("classifier.bias", &classifier_bias);
  return out;
}

std::vector<std::pair<std::string, const TensorD*>> MoldHead::named_parameters() const {
  std::vector<std::pair<std::string, const TensorD*>> out;
  for (auto& [name, t] : const_cast<MoldHead*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

std::vector<std::span<double>> MoldHead::parameters() {
  std::vector<std::span<double>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t->span());
  return out;
}

double MoldHead::score(const LayerFeatureSet& feats) const { return forward(*this, feats).y_hat; }

double MoldHead::accumulate_gradient(const LayerFeatureSet& feats, int label, MoldHead& grad) const {
  const ForwardTrace trace = forward(*this, feats);
  backward(*this, feats, trace, label, grad);
  return bce_loss(trace.y_hat, label);
}

namespace {

// out = x · w + b, x given in float.
void affine(std::span<const float> x, const TensorD& w, const TensorD& b, std::vector<double>& out) {
  const std::size_t n = w.dim(1);
  out.assign(b.values().begin(), b.values().end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    const double* row = w.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += xk * row[j];
  }
}

void check_features(const MoldHead& head, const LayerFeatureSet& feats) {
  if (feats.num_layers() != head.dims.layers || feats.dim() != head.dims.feature_dim) {
    throw DimensionError("feature stack " + shape_string(feats.per_layer_cls.shape()) +
                         " does not match head [" + std::to_string(head.dims.layers) + ", " +
                         std::to_string(head.dims.feature_dim) + "]");
  }
}

}  // namespace

ForwardTrace forward(const MoldHead& head, const LayerFeatureSet& feats,
                     const std::vector<bool>& excluded_layers) {
  check_features(head, feats);
  const auto& dims = head.dims;
  if (!excluded_layers.empty()) {
    if (excluded_layers.size() != dims.layers) {
      throw std::invalid_argument("layer mask must have one flag per layer");
    }
    if (std::all_of(excluded_layers.begin(), excluded_layers.end(), [](bool b) { return b; })) {
      throw std::invalid_argument("cannot exclude every layer");
    }
  }

  ForwardTrace t;
  t.proj_pre.resize(dims.layers);
  t.h.resize(dims.layers);
  for (std::size_t i = 0; i < dims.layers; ++i) {
    affine(feats.layer(i), head.proj_weight[i], head.proj_bias[i], t.proj_pre[i]);
    t.h[i].resize(dims.shared_dim);
    std::transform(t.proj_pre[i].begin(), t.proj_pre[i].end(), t.h[i].begin(),
                   [](double v) { return gelu(v); });
  }

  affine(feats.layer(dims.layers - 1), head.gate_fc1_weight, head.gate_fc1_bias, t.gate_pre);
  t.gate_hidden.resize(dims.gate_hidden);
  std::transform(t.gate_pre.begin(), t.gate_pre.end(), t.gate_hidden.begin(),
                 [](double v) { return gelu(v); });
  t.gate_logits.resize(dims.layers);
  vec_matmul<double>(t.gate_hidden, head.gate_fc2_weight, head.gate_fc2_bias.span(),
                     t.gate_logits);
  for (std::size_t i = 0; i < excluded_layers.size(); ++i) {
    if (excluded_layers[i]) t.gate_logits[i] = -std::numeric_limits<double>::infinity();
  }
  t.w = softmax<double>(t.gate_logits);

  t.h_fused.assign(dims.shared_dim, 0.0);
  for (std::size_t i = 0; i < dims.layers; ++i) {
    if (t.w[i] == 0.0) continue;
    for (std::size_t j = 0; j < dims.shared_dim; ++j) t.h_fused[j] += t.w[i] * t.h[i][j];
  }

  t.z = head.classifier_bias[0];
  for (std::size_t j = 0; j < dims.shared_dim; ++j) t.z += head.classifier_weight[j] * t.h_fused[j];
  t.y_hat = sigmoid(t.z);
  if (!std::isfinite(t.z)) throw NumericFault("non-finite logit in MoLD forward");
  return t;
}

double bce_loss(double y_hat, int label) {
  const double p = std::clamp(y_hat, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double bce_loss_mean(std::span<const double> y_hat, std::span<const int> labels) {
  if (y_hat.size() != labels.size() || y_hat.empty()) {
    throw std::invalid_argument("bce_loss_mean needs equal, nonzero lengths");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) total += bce_loss(y_hat[i], labels[i]);
  return total / static_cast<double>(y_hat.size());
}

void backward(const MoldHead& head, const LayerFeatureSet& feats, const ForwardTrace& t, int label,
              MoldGradients& grad) {
  check_features(head, feats);
  const auto& dims = head.dims;
  if (grad.dims != dims) throw DimensionError("gradient buffer does not match head dims");
  const std::size_t L = dims.layers, ds = dims.shared_dim, dg = dims.gate_hidden;

  const double dz = t.y_hat - static_cast<double>(label);
  grad.classifier_bias[0] += dz;
  for (std::size_t j = 0; j < ds; ++j) grad.classifier_weight[j] += dz * t.h_fused[j];
  if (dz == 0.0) return;

  std::vector<double> d_fused(ds);
  for (std::size_t j = 0; j < ds; ++j) d_fused[j] = dz * head.classifier_weight[j];

  // Fusion: ∂/∂h_i = w_i · d_fused, ∂/∂w_i = h_i · d_fused.
  std::vector<double> d_w(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < ds; ++j) d_w[i] += t.h[i][j] * d_fused[j];
  }

  // Projections.
  std::vector<double> d_pre(ds);
  for (std::size_t i = 0; i < L; ++i) {
    if (t.w[i] == 0.0) continue;
    for (std::size_t j = 0; j < ds; ++j) {
      d_pre[j] = t.w[i] * d_fused[j] * gelu_grad(t.proj_pre[i][j]);
    }
    auto x = feats.layer(i);
    double* gw = grad.proj_weight[i].data();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double xk = x[k];
      for (std::size_t j = 0; j < ds; ++j) gw[k * ds + j] += xk * d_pre[j];
    }
    for (std::size_t j = 0; j < ds; ++j) grad.proj_bias[i][j] += d_pre[j];
  }

  // Softmax Jacobian: ∂/∂logit_i = w_i (∂/∂w_i − Σ_j w_j ∂/∂w_j).
  double mean_dw = 0.0;
  for (std::size_t i = 0; i < L; ++i) mean_dw += t.w[i] * d_w[i];
  std::vector<double> d_logit(L);
  for (std::size_t i = 0; i < L; ++i) d_logit[i] = t.w[i] * (d_w[i] - mean_dw);

  // Gate MLP over the top-layer feature.
  std::vector<double> d_hidden(dg, 0.0);
  for (std::size_t a = 0; a < dg; ++a) {
    for (std::size_t i = 0; i < L; ++i) {
      grad.gate_fc2_weight[a * L + i] += t.gate_hidden[a] * d_logit[i];
      d_hidden[a] += head.gate_fc2_weight[a * L + i] * d_logit[i];
    }
  }
  for (std::size_t i = 0; i < L; ++i) grad.gate_fc2_bias[i] += d_logit[i];
  for (std::size_t a = 0; a < dg; ++a) d_hidden[a] *= gelu_grad(t.gate_pre[a]);
  auto top = feats.layer(L - 1);
  for (std::size_t k = 0; k < top.size(); ++k) {
    const double xk = top[k];
    for (std::size_t a = 0; a < dg; ++a) grad.gate_fc1_weight[k * dg + a] += xk * d_hidden[a];
  }
  for (std::size_t a = 0; a < dg; ++a) grad.gate_fc1_bias[a] += d_hidden[a];
}

MoldGradients backward(const MoldHead& head, const LayerFeatureSet& feats, const ForwardTrace& trace,
                       int label) {
  MoldGradients grad = head.zeros_like();
  backward(head, feats, trace, label, grad);
  return grad;
}

Prediction predict(const MoldHead& head, const LayerFeatureSet& feats,
                   const std::vector<bool>& excluded_layers) {
  const double score = forward(head, feats, excluded_layers).y_hat;
  return {score, score >= 0.5 ? 1 : 0};
}

GateStats gating_stats(std::span<const MoldHead> heads, std::span<const LayerFeatureSet> probe_set) {
  if (heads.empty()) throw std::invalid_argument("gating_stats needs at least one head");
  if (probe_set.empty()) throw std::invalid_argument("gating_stats needs a nonempty probe set");
  const std::size_t L = heads.front().dims.layers;
  std::vector<std::vector<double>> per_head;
  for (const auto& head : heads) {
    if (head.dims.layers != L) throw DimensionError("heads disagree on layer count");
    std::vector<double> avg(L, 0.0);
    for (const auto& f : probe_set) {
      const auto t = forward(head, f);
      for (std::size_t i = 0; i < L; ++i) avg[i] += t.w[i];
    }
    for (auto& v : avg) v /= static_cast<double>(probe_set.size());
    per_head.push_back(std::move(avg));
  }
  GateStats stats;
  stats.mean.assign(L, 0.0);
  stats.std.assign(L, 0.0);
  const double n = static_cast<double>(per_head.size());
  for (std::size_t i = 0; i < L; ++i) {
    // Shifted by the first head so identical heads give exactly zero spread.
    const double shift = per_head.front()[i];
    double s1 = 0.0, s2 = 0.0;
    for (const auto& avg : per_head) {
      s1 += avg[i] - shift;
      s2 += (avg[i] - shift) * (avg[i] - shift);
    }
    stats.mean[i] = shift + s1 / n;
    stats.std[i] = std::sqrt(std::max(0.0, s2 / n - (s1 / n) * (s1 / n)));
  }
  return stats;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_mold_checkpoint(const std::filesystem::path& path, const MoldHead& head,
                          nlohmann::json sidecar) {
  TensorContainer c;
  for (const auto& [name, t] : head.named_parameters()) c.put(name, *t);
  c.metadata()["kind"] = "mold";
  c.save(path);
  sidecar["kind"] = "mold";
  sidecar["L"] = head.dims.layers;
  sidecar["d"] = head.dims.feature_dim;
  sidecar["d_s"] = head.dims.shared_dim;
  sidecar["d_g"] = head.dims.gate_hidden;
  write_file_bytes(sidecar_path(path), sidecar.dump(2) + "\n");
}

std::pair<MoldHead, nlohmann::json> load_mold_checkpoint(const std::filesystem::path& path) {
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(read_file_bytes(sidecar_path(path)));
    if (sidecar.value("kind", "mold") != "mold") {
      throw DataError("checkpoint " + path.string() + " is not a MoLD head");
    }
    MoldDims dims{sidecar.at("L").get<std::size_t>(), sidecar.at("d").get<std::size_t>(),
                  sidecar.at("d_s").get<std::size_t>(), sidecar.at("d_g").get<std::size_t>()};
    const TensorContainer c = TensorContainer::load(path);
    MoldHead head = MoldHead::zeros(dims);
    for (auto& [name, t] : head.named_parameters()) *t = c.get_f64(name, t->shape());
    return {std::move(head), std::move(sidecar)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
}

}  // namespace moldkit
