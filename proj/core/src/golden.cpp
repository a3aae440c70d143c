#include "moldkit/golden.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "moldkit/error.hpp"

namespace moldkit {

namespace {

const std::string& meta_or_throw(const TensorContainer& c, const std::string& key) {
  const auto it = c.metadata().find(key);
  if (it == c.metadata().end()) throw DataError("golden fixture lacks metadata '" + key + "'");
  return it->second;
}

}  // namespace

TensorF golden_input(const ViTConfig& config, std::uint64_t seed) {
  const std::size_t s = config.image_size;
  TensorF t({3, s, s});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  for (auto& v : t.values()) v = static_cast<float>(n(rng));
  return t;
}

GoldenFixture make_golden(const ViTWeights& weights, const ViTConfig& config, std::uint64_t seed) {
  GoldenFixture f;
  f.config = config;
  f.seed = seed;
  f.source = "moldkit";
  f.input = golden_input(config, seed);
  f.cls = encode_layers(weights, config, f.input).features.per_layer_cls;
  return f;
}

TensorContainer golden_to_container(const GoldenFixture& fixture) {
  TensorContainer c;
  c.put("input", fixture.input);
  c.put("cls", fixture.cls);
  c.metadata()["config"] = nlohmann::json(fixture.config).dump();
  c.metadata()["seed"] = std::to_string(fixture.seed);
  c.metadata()["source"] = fixture.source;
  return c;
}

GoldenFixture golden_from_container(const TensorContainer& container) {
  GoldenFixture f;
  try {
    f.config = nlohmann::json::parse(meta_or_throw(container, "config")).get<ViTConfig>();
    f.seed = std::stoull(meta_or_throw(container, "seed"));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("golden fixture metadata: ") + e.what());
  }
  f.config.validate();
  if (auto it = container.metadata().find("source"); it != container.metadata().end()) f.source = it->second;
  const std::size_t s = f.config.image_size;
  f.input = container.get_f32("input", {3, s, s});
  f.cls = container.get_f32("cls", {f.config.num_layers, f.config.embed_dim});
  return f;
}

void save_golden(const std::filesystem::path& path, const GoldenFixture& fixture) {
  golden_to_container(fixture).save(path);
}

GoldenFixture load_golden(const std::filesystem::path& path) {
  return golden_from_container(TensorContainer::load(path));
}

GoldenComparison compare_golden(const ViTWeights& weights, const GoldenFixture& fixture) {
  const auto got = encode_layers(weights, fixture.config, fixture.input).features.per_layer_cls;
  GoldenComparison r;
  r.per_layer_max_abs.assign(fixture.config.num_layers, 0.0);
  for (std::size_t l = 0; l < fixture.config.num_layers; ++l) {
    const auto a = got.row(l), b = fixture.cls.row(l);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = std::abs(static_cast<double>(a[i]) - b[i]);
      r.per_layer_max_abs[l] = std::max(r.per_layer_max_abs[l], std::isnan(d) ? INFINITY : d);
    }
    r.max_abs = std::max(r.max_abs, r.per_layer_max_abs[l]);
  }
  return r;
}

}  // namespace moldkit
