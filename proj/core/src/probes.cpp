#include "moldkit/probes.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "moldkit/container.hpp"
#include "moldkit/parallel.hpp"

namespace moldkit {

ProbeKind parse_probe_kind(const std::string& name) {
  if (name == "linear") return ProbeKind::linear;
  if (name == "two-layer" || name == "two_layer" || name == "two_layer_gelu") return ProbeKind::two_layer_gelu;
  throw std::invalid_argument("unknown probe head '" + name + "' (expected linear or two-layer)");
}

std::string probe_kind_name(ProbeKind kind) {
  return kind == ProbeKind::linear ? "linear" : "two-layer";
}

void ProbeSpec::validate(std::size_t num_layers) const {
  if (layer < 1 || layer > num_layers) {
    throw std::invalid_argument("probe layer " + std::to_string(layer) + " outside [1, " +
                                std::to_string(num_layers) + "]");
  }
  if (group_size < 1 || group_size > layer) {
    throw std::invalid_argument("probe group of size " + std::to_string(group_size) +
                                " ending at layer " + std::to_string(layer) + " is out of bounds");
  }
  train_config.validate();
}

ProbeModel ProbeModel::create(const ProbeSpec& spec, std::size_t num_layers, std::size_t dim) {
  spec.validate(num_layers);
  if (dim == 0) throw std::invalid_argument("probe feature dim must be positive");
  ProbeModel p;
  p.kind = spec.kind;
  p.layer = spec.layer;
  p.group_size = spec.group_size;
  p.num_layers = num_layers;
  p.dim = dim;
  p.out_bias = TensorD({1});
  if (spec.kind == ProbeKind::linear) {
    p.out_weight = TensorD({dim});
    return p;
  }
  p.hidden = spec.hidden_dim ? spec.hidden_dim : dim;
  p.fc1_weight = TensorD({dim, p.hidden});
  p.fc1_bias = TensorD({p.hidden});
  p.out_weight = TensorD({p.hidden});
  std::mt19937_64 rng(spec.train_config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : p.fc1_weight.values()) v = u(rng);
  for (auto& v : p.fc1_bias.values()) v = u(rng);
  return p;
}

ProbeModel ProbeModel::zeros_like() const {
  ProbeModel g = *this;
  for (auto& [name, t] : g.named_parameters()) t->fill(0.0);
  return g;
}

std::string ProbeModel::name() const {
  std::string n = "layer" + std::to_string(layer);
  if (group_size > 1) n += "-g" + std::to_string(group_size);
  if (kind == ProbeKind::two_layer_gelu) n += "-mlp";
  return n;
}

std::vector<std::pair<std::string, TensorD*>> ProbeModel::named_parameters() {
  std::vector<std::pair<std::string, TensorD*>> out;
  if (kind == ProbeKind::two_layer_gelu) {
    out.emplace_back("fc1.weight", &fc1_weight);
    out.emplace_back("fc1.bias", &fc1_bias);
  }
  out.emplace_back("out.weight", &out_weight);
  out.emplace_back("out.bias", &out_bias);
  return out;
}

std::vector<std::pair<std::string, const TensorD*>> ProbeModel::named_parameters() const {
  std::vector<std::pair<std::string, const TensorD*>> out;
  for (auto& [name, t] : const_cast<ProbeModel*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

std::vector<std::span<double>> ProbeModel::parameters() {
  std::vector<std::span<double>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t->span());
  return out;
}

namespace {

std::span<const float> probe_input(const ProbeModel& p, const LayerFeatureSet& feats) {
  if (feats.num_layers() != p.num_layers || feats.dim() != p.dim) {
    throw DimensionError("feature stack " + shape_string(feats.per_layer_cls.shape()) +
                         " does not match probe input [" + std::to_string(p.num_layers) + ", " +
                         std::to_string(p.dim) + "]");
  }
  return feats.layer(p.layer - 1);
}

void hidden_pre(const ProbeModel& p, std::span<const float> x, std::vector<double>& pre) {
  pre.assign(p.fc1_bias.values().begin(), p.fc1_bias.values().end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x[k];
    const double* row = p.fc1_weight.data() + k * p.hidden;
    for (std::size_t j = 0; j < p.hidden; ++j) pre[j] += xk * row[j];
  }
}

}  // namespace

double ProbeModel::logit(const LayerFeatureSet& feats) const {
  const auto x = probe_input(*this, feats);
  double z = out_bias[0];
  if (kind == ProbeKind::linear) {
    for (std::size_t k = 0; k < dim; ++k) z += out_weight[k] * x[k];
    return z;
  }
  std::vector<double> pre;
  hidden_pre(*this, x, pre);
  for (std::size_t j = 0; j < hidden; ++j) z += out_weight[j] * gelu(pre[j]);
  return z;
}

double ProbeModel::score(const LayerFeatureSet& feats) const { return sigmoid(logit(feats)); }

double ProbeModel::accumulate_gradient(const LayerFeatureSet& feats, int label, ProbeModel& grad) const {
  const auto x = probe_input(*this, feats);
  if (kind == ProbeKind::linear) {
    const double y_hat = score(feats);
    const double dz = y_hat - label;
    for (std::size_t k = 0; k < dim; ++k) grad.out_weight[k] += dz * x[k];
    grad.out_bias[0] += dz;
    return bce_loss(y_hat, label);
  }
  std::vector<double> pre;
  hidden_pre(*this, x, pre);
  double z = out_bias[0];
  for (std::size_t j = 0; j < hidden; ++j) z += out_weight[j] * gelu(pre[j]);
  const double y_hat = sigmoid(z);
  const double dz = y_hat - label;
  grad.out_bias[0] += dz;
  std::vector<double> d_pre(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    grad.out_weight[j] += dz * gelu(pre[j]);
    d_pre[j] = dz * out_weight[j] * gelu_grad(pre[j]);
    grad.fc1_bias[j] += d_pre[j];
  }
  for (std::size_t k = 0; k < dim; ++k) {
    const double xk = x[k];
    double* row = grad.fc1_weight.data() + k * hidden;
    for (std::size_t j = 0; j < hidden; ++j) row[j] += xk * d_pre[j];
  }
  return bce_loss(y_hat, label);
}

ProbeModel train_probe(const ProbeSpec& spec, const LabeledSet& train, const LabeledSet& val,
                       TrainingLog* log) {
  if (train.empty()) throw std::invalid_argument("training data is empty");
  const auto& first = train.features.front();
  ProbeModel init = ProbeModel::create(spec, first.num_layers(), first.dim());
  return train_head(std::move(init), train, val, spec.train_config, log);
}

namespace {

std::vector<std::string> subset_tags(const LabeledSet& set) {
  std::vector<std::string> tags(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) tags[i] = set.subset_of(i);
  return tags;
}

}  // namespace

EvalReport evaluate_probe(const ProbeModel& probe, const LabeledSet& eval) {
  eval.validate(probe.num_layers, probe.dim);
  const auto scores = score_all(probe, eval);
  return evaluate_by_subset(scores, eval.labels, subset_tags(eval));
}

EvalReport evaluate_head(const MoldHead& head, const LabeledSet& eval,
                         const std::vector<bool>& excluded_layers) {
  eval.validate(head.dims.layers, head.dims.feature_dim);
  std::vector<double> scores(eval.size());
  for (std::size_t i = 0; i < eval.size(); ++i) {
    scores[i] = predict(head, eval.features[i], excluded_layers).score;
  }
  return evaluate_by_subset(scores, eval.labels, subset_tags(eval));
}

OverlapMatrix overlap_from_error_sets(std::vector<std::string> names,
                                      std::vector<std::set<std::size_t>> errors,
                                      std::size_t test_size) {
  if (names.size() != errors.size()) throw std::invalid_argument("one name per error set is required");
  if (test_size == 0) throw std::invalid_argument("overlap needs a nonempty test set");
  const std::size_t k = errors.size();
  OverlapMatrix m;
  m.names = std::move(names);
  m.test_size = test_size;
  auto square = [k](auto fill) { return std::vector(k, std::vector<decltype(fill)>(k, fill)); };
  m.jaccard = square(0.0);
  m.overlap_coefficient = square(0.0);
  m.fraction_of_test = square(0.0);
  m.intersection = square(std::size_t{0});
  for (const auto& e : errors) {
    m.error_ids.emplace_back(e.begin(), e.end());
    m.empty_error_set.push_back(e.empty());
  }
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      std::size_t common = 0;
      for (auto id : errors[a]) common += errors[b].count(id);
      const std::size_t uni = errors[a].size() + errors[b].size() - common;
      const std::size_t smaller = std::min(errors[a].size(), errors[b].size());
      m.intersection[a][b] = common;
      m.fraction_of_test[a][b] = static_cast<double>(common) / static_cast<double>(test_size);
      if (errors[a].empty() || errors[b].empty()) {
        const double sentinel = a == b ? 1.0 : 0.0;
        m.jaccard[a][b] = sentinel;
        m.overlap_coefficient[a][b] = sentinel;
      } else {
        m.jaccard[a][b] = static_cast<double>(common) / static_cast<double>(uni);
        m.overlap_coefficient[a][b] = static_cast<double>(common) / static_cast<double>(smaller);
      }
    }
  }
  return m;
}

OverlapMatrix overlap_matrix(std::span<const ProbeModel> probes, const LabeledSet& test) {
  if (probes.size() < 2) throw std::invalid_argument("overlap needs at least two probes");
  if (test.empty()) throw std::invalid_argument("overlap needs a nonempty test set");
  std::vector<std::string> names;
  std::vector<std::set<std::size_t>> errors;
  for (const auto& p : probes) {
    test.validate(p.num_layers, p.dim);
    names.push_back(p.name());
    std::set<std::size_t> e;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const int predicted = p.score(test.features[i]) >= 0.5 ? 1 : 0;
      if (predicted != test.labels[i]) e.insert(i);
    }
    errors.push_back(std::move(e));
  }
  return overlap_from_error_sets(std::move(names), std::move(errors), test.size());
}

std::string overlap_to_csv(const OverlapMatrix& m, const std::string& statistic) {
  std::ostringstream out;
  out.precision(17);
  out << "probe";
  for (const auto& n : m.names) out << ',' << n;
  out << '\n';
  for (std::size_t a = 0; a < m.names.size(); ++a) {
    out << m.names[a];
    for (std::size_t b = 0; b < m.names.size(); ++b) {
      out << ',';
      if (statistic == "jaccard") {
        out << m.jaccard[a][b];
      } else if (statistic == "overlap_coefficient") {
        out << m.overlap_coefficient[a][b];
      } else if (statistic == "fraction_of_test") {
        out << m.fraction_of_test[a][b];
      } else if (statistic == "intersection") {
        out << m.intersection[a][b];
      } else {
        throw std::invalid_argument("unknown overlap statistic '" + statistic + "'");
      }
    }
    out << '\n';
  }
  return out.str();
}

EvalReport ablate_layers(const MoldHead& head, const std::set<std::size_t>& excluded,
                         const LabeledSet& eval) {
  const std::size_t L = head.dims.layers;
  std::vector<bool> mask(L, false);
  for (auto i : excluded) {
    if (i < 1 || i > L) {
      throw std::invalid_argument("excluded layer " + std::to_string(i) + " outside [1, " +
                                  std::to_string(L) + "]");
    }
    mask[i - 1] = true;
  }
  if (excluded.size() == L) throw std::invalid_argument("cannot exclude every layer");
  if (excluded.empty()) return evaluate_head(head, eval);
  return evaluate_head(head, eval, mask);
}

std::size_t same_label_partner(std::span<const int> labels, std::size_t i) {
  for (std::size_t step = 1; step < labels.size(); ++step) {
    const std::size_t j = (i + step) % labels.size();
    if (labels[j] == labels[i]) return j;
  }
  return i;
}

LabeledSet encode_transformed(const ViTWeights& weights, const ViTConfig& config,
                              const SemanticTransform& transform, const LabeledImages& eval,
                              const PreprocessConfig& preprocess, unsigned threads) {
  transform.spec.validate();
  if (eval.images.size() != eval.labels.size() || eval.images.empty()) {
    throw std::invalid_argument("need one label per image and a nonempty image set");
  }
  const std::size_t n = eval.images.size();
  LabeledSet set;
  set.features.resize(n);
  set.labels = eval.labels;
  parallel_for(n, threads, [&](std::size_t i) {
    Image img;
    switch (transform.spec.kind) {
      case PerturbationKind::jigsaw:
        img = jigsaw(eval.images[i], transform.spec.grid, transform.spec.seed + i);
        break;
      case PerturbationKind::cutmix: {
        const std::size_t partner = transform.partner == CutmixPartner::same_label_next
                                        ? same_label_partner(eval.labels, i)
                                        : i;
        img = cutmix(eval.images[i], eval.labels[i], eval.images[partner], eval.labels[partner],
                     transform.spec.box_fraction, transform.spec.seed + i);
        break;
      }
      default:
        img = perturb(eval.images[i], transform.spec);
    }
    set.features[i] = encode_layers(weights, config, to_pixels(img, preprocess)).features;
  });
  return set;
}

std::vector<EvalReport> semantic_probe_eval(std::span<const ProbeModel> probes,
                                            const ViTWeights& weights, const ViTConfig& config,
                                            const SemanticTransform& transform,
                                            const LabeledImages& eval,
                                            const PreprocessConfig& preprocess, unsigned threads) {
  const auto kind = transform.spec.kind;
  if (kind != PerturbationKind::cutmix && kind != PerturbationKind::jigsaw) {
    throw std::invalid_argument("semantic probes use cutmix or jigsaw transforms");
  }
  const LabeledSet set = encode_transformed(weights, config, transform, eval, preprocess, threads);
  std::vector<EvalReport> reports;
  for (const auto& p : probes) reports.push_back(evaluate_probe(p, set));
  return reports;
}

void save_probe_checkpoint(const std::filesystem::path& path, const ProbeModel& probe,
                           nlohmann::json sidecar) {
  TensorContainer c;
  for (const auto& [name, t] : probe.named_parameters()) c.put(name, *t);
  c.metadata()["kind"] = "probe";
  c.save(path);
  sidecar["kind"] = "probe";
  sidecar["head"] = probe_kind_name(probe.kind);
  sidecar["layer"] = probe.layer;
  sidecar["group_size"] = probe.group_size;
  sidecar["L"] = probe.num_layers;
  sidecar["d"] = probe.dim;
  sidecar["hidden"] = probe.hidden;
  write_file_bytes(sidecar_path(path), sidecar.dump(2) + "\n");
}

std::pair<ProbeModel, nlohmann::json> load_probe_checkpoint(const std::filesystem::path& path) {
  try {
    auto sidecar = nlohmann::json::parse(read_file_bytes(sidecar_path(path)));
    if (sidecar.value("kind", "") != "probe") {
      throw DataError("checkpoint " + path.string() + " is not a probe");
    }
    ProbeSpec spec;
    spec.kind = parse_probe_kind(sidecar.at("head").get<std::string>());
    spec.layer = sidecar.at("layer").get<std::size_t>();
    spec.group_size = sidecar.at("group_size").get<std::size_t>();
    spec.hidden_dim = sidecar.at("hidden").get<std::size_t>();
    ProbeModel probe = ProbeModel::create(spec, sidecar.at("L").get<std::size_t>(),
                                          sidecar.at("d").get<std::size_t>());
    const TensorContainer c = TensorContainer::load(path);
    for (auto& [name, t] : probe.named_parameters()) *t = c.get_f64(name, t->shape());
    return {std::move(probe), std::move(sidecar)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed probe sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
}

}  // namespace moldkit
