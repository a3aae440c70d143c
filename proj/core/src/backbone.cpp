#include "moldkit/backbone.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

namespace moldkit {

using json = nlohmann::json;

std::size_t ViTConfig::mlp_dim() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(embed_dim) * mlp_ratio));
}

void ViTConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("image_size must be a positive multiple of patch_size");
  }
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    throw std::invalid_argument("embed_dim must be a positive multiple of num_heads");
  }
  if (num_layers == 0) throw std::invalid_argument("num_layers must be >= 1");
  if (!(mlp_ratio > 0.0) || mlp_dim() == 0) throw std::invalid_argument("mlp_ratio must be positive");
  if (layer_group_size == 0) throw std::invalid_argument("layer_group_size must be >= 1");
  if (!(layernorm_eps > 0.0)) throw std::invalid_argument("layernorm_eps must be positive");
}

ViTConfig ViTConfig::preset(const std::string& name) {
  ViTConfig c;
  c.name = name;
  if (name == "clip-vit-l-14") {
    c.image_size = 224; c.patch_size = 14; c.embed_dim = 1024; c.num_layers = 24;
    c.num_heads = 16; c.embed_norm = true; c.mlp_activation = MlpActivation::quick_gelu;
    c.layernorm_eps = 1e-5; c.layer_group_size = 3;
  } else if (name == "clip-vit-b-16") {
    c.image_size = 224; c.patch_size = 16; c.embed_dim = 768; c.num_layers = 12;
    c.num_heads = 12; c.embed_norm = true; c.mlp_activation = MlpActivation::quick_gelu;
    c.layernorm_eps = 1e-5;
  } else if (name == "vit-b-16") {
    c.image_size = 224; c.patch_size = 16; c.embed_dim = 768; c.num_layers = 12;
    c.num_heads = 12;
  } else if (name == "toy") {
    c.image_size = 8; c.patch_size = 4; c.embed_dim = 8; c.num_layers = 4; c.num_heads = 2;
  } else if (name == "toy-32") {
    c.image_size = 32; c.patch_size = 8; c.embed_dim = 32; c.num_layers = 4; c.num_heads = 4;
  } else {
    throw std::invalid_argument("unknown backbone preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> ViTConfig::preset_names() {
  return {"clip-vit-l-14", "clip-vit-b-16", "vit-b-16", "toy", "toy-32"};
}

NLOHMANN_JSON_SERIALIZE_ENUM(MlpActivation, {{MlpActivation::gelu, "gelu"},
                                             {MlpActivation::quick_gelu, "quick_gelu"}})

void to_json(json& j, const ViTConfig& c) {
  j = json{{"name", c.name},
           {"image_size", c.image_size},
           {"patch_size", c.patch_size},
           {"embed_dim", c.embed_dim},
           {"num_layers", c.num_layers},
           {"num_heads", c.num_heads},
           {"mlp_ratio", c.mlp_ratio},
           {"has_cls_token", c.has_cls_token},
           {"layer_group_size", c.layer_group_size},
           {"embed_norm", c.embed_norm},
           {"mlp_activation", c.mlp_activation},
           {"layernorm_eps", c.layernorm_eps}};
}

void from_json(const json& j, ViTConfig& c) {
  ViTConfig d;
  c.name = j.value("name", d.name);
  c.image_size = j.at("image_size").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
  c.has_cls_token = j.value("has_cls_token", d.has_cls_token);
  c.layer_group_size = j.value("layer_group_size", d.layer_group_size);
  c.embed_norm = j.value("embed_norm", d.embed_norm);
  c.mlp_activation = j.value("mlp_activation", d.mlp_activation);
  c.layernorm_eps = j.value("layernorm_eps", d.layernorm_eps);
}

namespace {

std::string block_name(std::size_t i, const char* suffix) {
  return "blocks." + std::to_string(i) + "." + suffix;
}

struct Slot {
  std::string name;
  Shape shape;
  TensorF ViTWeights::*top = nullptr;
  TensorF BlockWeights::*block = nullptr;
  std::size_t block_index = 0;
};

std::vector<Slot> slots(const ViTConfig& c) {
  const std::size_t d = c.embed_dim, h = c.mlp_dim();
  std::vector<Slot> out;
  out.push_back({"patch_embed.weight", {c.patch_dim(), d}, &ViTWeights::patch_weight});
  out.push_back({"patch_embed.bias", {d}, &ViTWeights::patch_bias});
  if (c.has_cls_token) out.push_back({"cls_token", {d}, &ViTWeights::class_embedding});
  out.push_back({"pos_embed", {c.num_tokens(), d}, &ViTWeights::pos_embedding});
  if (c.embed_norm) {
    out.push_back({"embed_norm.weight", {d}, &ViTWeights::embed_norm_weight});
    out.push_back({"embed_norm.bias", {d}, &ViTWeights::embed_norm_bias});
  }
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    auto add = [&](const char* suffix, Shape shape, TensorF BlockWeights::*member) {
      out.push_back({block_name(i, suffix), std::move(shape), nullptr, member, i});
    };
    add("norm1.weight", {d}, &BlockWeights::norm1_weight);
    add("norm1.bias", {d}, &BlockWeights::norm1_bias);
    add("attn.qkv.weight", {d, 3 * d}, &BlockWeights::qkv_weight);
    add("attn.qkv.bias", {3 * d}, &BlockWeights::qkv_bias);
    add("attn.proj.weight", {d, d}, &BlockWeights::proj_weight);
    add("attn.proj.bias", {d}, &BlockWeights::proj_bias);
    add("norm2.weight", {d}, &BlockWeights::norm2_weight);
    add("norm2.bias", {d}, &BlockWeights::norm2_bias);
    add("mlp.fc1.weight", {d, h}, &BlockWeights::fc1_weight);
    add("mlp.fc1.bias", {h}, &BlockWeights::fc1_bias);
    add("mlp.fc2.weight", {h, d}, &BlockWeights::fc2_weight);
    add("mlp.fc2.bias", {d}, &BlockWeights::fc2_bias);
  }
  out.push_back({"norm.weight", {d}, &ViTWeights::norm_weight});
  out.push_back({"norm.bias", {d}, &ViTWeights::norm_bias});
  return out;
}

TensorF& slot_ref(ViTWeights& w, const Slot& s) {
  return s.top ? w.*(s.top) : w.blocks[s.block_index].*(s.block);
}

const TensorF& slot_ref(const ViTWeights& w, const Slot& s) {
  return s.top ? w.*(s.top) : w.blocks[s.block_index].*(s.block);
}

}  // namespace

std::vector<std::pair<std::string, Shape>> required_tensors(const ViTConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, Shape>> out;
  for (auto& s : slots(config)) out.emplace_back(s.name, s.shape);
  return out;
}

ViTWeights weights_from_container(const TensorContainer& container, const ViTConfig& config) {
  config.validate();
  ViTWeights w;
  w.blocks.resize(config.num_layers);
  for (const auto& s : slots(config)) {
    TensorF t = container.get_f32(s.name, s.shape);
    if (!t.all_finite()) throw DataError("non-finite values in tensor " + s.name);
    slot_ref(w, s) = std::move(t);
  }
  return w;
}

TensorContainer weights_to_container(const ViTWeights& weights, const ViTConfig& config) {
  config.validate();
  TensorContainer out;
  for (const auto& s : slots(config)) out.put(s.name, slot_ref(weights, s));
  out.metadata()["config"] = json(config).dump();
  return out;
}

ViTWeights load_weights(const std::filesystem::path& path, const ViTConfig& config) {
  return weights_from_container(TensorContainer::load(path), config);
}

void save_weights(const std::filesystem::path& path, const ViTWeights& weights,
                  const ViTConfig& config) {
  weights_to_container(weights, config).save(path);
}

ViTWeights random_weights(const ViTConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ViTWeights w;
  w.blocks.resize(config.num_layers);
  for (const auto& s : slots(config)) {
    TensorF t(s.shape);
    const bool is_norm = s.name.find("norm") != std::string::npos;
    const bool is_weight = s.name.ends_with(".weight");
    if (is_norm) {
      t.fill(is_weight ? 1.0f : 0.0f);
    } else {
      double scale = 0.02;
      if (is_weight) scale = 1.0 / std::sqrt(static_cast<double>(s.shape[0]));
      if (s.name == "cls_token") scale = 1.0;
      if (s.name == "pos_embed") scale = 0.1;
      for (auto& v : t.values()) v = static_cast<float>(scale * normal(rng));
    }
    slot_ref(w, s) = std::move(t);
  }
  return w;
}

namespace {

// x[T, in] · w[in, out] + b
TensorF linear(const TensorF& x, const TensorF& w, const TensorF& b) {
  TensorF y = matmul(x, w);
  const std::size_t n = y.dim(1);
  for (std::size_t i = 0; i < y.dim(0); ++i) {
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] += b[j];
  }
  return y;
}

TensorF layernorm_rows(const TensorF& x, const TensorF& gamma, const TensorF& beta, double eps) {
  TensorF y(x.shape());
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    auto row = layernorm(x.row(i), gamma.span(), beta.span(), eps);
    std::copy(row.begin(), row.end(), y.row(i).begin());
  }
  return y;
}

void activate(TensorF& x, MlpActivation act) {
  if (act == MlpActivation::gelu) {
    gelu_inplace(x.span());
  } else {
    for (auto& v : x.values()) v = static_cast<float>(v * sigmoid(1.702 * v));
  }
}

}  // namespace

EncodeResult encode_layers(const ViTWeights& weights, const ViTConfig& config,
                           const TensorF& pixels, bool record_attention) {
  config.validate();
  const std::size_t s = config.image_size, p = config.patch_size, g = config.grid_size();
  if (pixels.rank() != 3 || pixels.dim(0) != 3 || pixels.dim(1) != s || pixels.dim(2) != s) {
    throw DimensionError("encode_layers expects pixels of shape [3, " + std::to_string(s) + ", " +
                         std::to_string(s) + "], got " + shape_string(pixels.shape()));
  }
  if (weights.blocks.size() != config.num_layers) {
    throw DimensionError("weights have " + std::to_string(weights.blocks.size()) +
                         " blocks but config expects " + std::to_string(config.num_layers));
  }
  const std::size_t d = config.embed_dim, tokens = config.num_tokens();
  const std::size_t offset = config.has_cls_token ? 1 : 0;
  const std::size_t heads = config.num_heads, hd = config.head_dim();

  // Patch embedding as a matmul over flattened (c, y, x) patches.
  TensorF patches({config.num_patches(), config.patch_dim()});
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      float* dst = patches.row(gy * g + gx).data();
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t py = 0; py < p; ++py) {
          for (std::size_t px = 0; px < p; ++px) {
            *dst++ = pixels[(c * s + gy * p + py) * s + gx * p + px];
          }
        }
      }
    }
  }
  const TensorF embedded = linear(patches, weights.patch_weight, weights.patch_bias);

  TensorF x({tokens, d});
  if (config.has_cls_token) std::copy_n(weights.class_embedding.data(), d, x.row(0).data());
  std::copy(embedded.values().begin(), embedded.values().end(), x.data() + offset * d);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += weights.pos_embedding[i];
  if (config.embed_norm) {
    x = layernorm_rows(x, weights.embed_norm_weight, weights.embed_norm_bias, config.layernorm_eps);
  }

  EncodeResult result;
  result.features.per_layer_cls = TensorF({config.num_layers, d});
  if (record_attention) {
    AttentionRecord rec;
    rec.num_layers = config.num_layers;
    rec.num_heads = heads;
    rec.num_tokens = tokens;
    rec.grid_size = g;
    rec.has_cls_token = config.has_cls_token;
    rec.probs.assign(config.num_layers * heads * tokens * tokens, 0.0f);
    result.attention = std::move(rec);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> scores(tokens);
  for (std::size_t layer = 0; layer < config.num_layers; ++layer) {
    const BlockWeights& blk = weights.blocks[layer];

    const TensorF qkv =
        linear(layernorm_rows(x, blk.norm1_weight, blk.norm1_bias, config.layernorm_eps),
               blk.qkv_weight, blk.qkv_bias);
    TensorF mixed({tokens, d});
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
      for (std::size_t i = 0; i < tokens; ++i) {
        const float* q = qkv.row(i).data() + qo;
        for (std::size_t j = 0; j < tokens; ++j) {
          const float* k = qkv.row(j).data() + ko;
          double dot = 0.0;
          for (std::size_t t = 0; t < hd; ++t) dot += static_cast<double>(q[t]) * k[t];
          scores[j] = dot * scale;
        }
        softmax_inplace(std::span<double>(scores));
        if (result.attention) {
          for (std::size_t j = 0; j < tokens; ++j) {
            result.attention->at(layer, h, i, j) = static_cast<float>(scores[j]);
          }
        }
        float* out = mixed.row(i).data() + qo;
        for (std::size_t t = 0; t < hd; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < tokens; ++j) acc += scores[j] * qkv.row(j)[vo + t];
          out[t] = static_cast<float>(acc);
        }
      }
    }
    const TensorF attn_out = linear(mixed, blk.proj_weight, blk.proj_bias);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];

    TensorF hidden =
        linear(layernorm_rows(x, blk.norm2_weight, blk.norm2_bias, config.layernorm_eps),
               blk.fc1_weight, blk.fc1_bias);
    activate(hidden, config.mlp_activation);
    const TensorF mlp_out = linear(hidden, blk.fc2_weight, blk.fc2_bias);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += mlp_out[i];

    if (!x.all_finite()) {
      throw NumericFault("non-finite activation after block " + std::to_string(layer));
    }

    auto dst = result.features.per_layer_cls.row(layer);
    if (config.has_cls_token) {
      std::copy_n(x.row(0).data(), d, dst.data());
    } else {
      std::vector<double> mean(d, 0.0);
      for (std::size_t i = 0; i < tokens; ++i) {
        for (std::size_t t = 0; t < d; ++t) mean[t] += x.row(i)[t];
      }
      for (std::size_t t = 0; t < d; ++t) dst[t] = static_cast<float>(mean[t] / tokens);
    }
  }
  return result;
}

std::vector<double> attention_distance(const AttentionRecord& record, const ViTConfig& config) {
  const std::size_t g = record.grid_size;
  const std::size_t offset = record.has_cls_token ? 1 : 0;
  if (record.num_tokens != g * g + offset ||
      record.probs.size() != record.num_layers * record.num_heads * record.num_tokens * record.num_tokens) {
    throw DimensionError("attention record geometry is inconsistent");
  }
  if (g != config.grid_size() || record.has_cls_token != config.has_cls_token) {
    throw DimensionError("attention record grid does not match the backbone config");
  }
  const double p = static_cast<double>(config.patch_size);
  const std::size_t spatial = g * g;

  // Pairwise center distances; the patch size scales them to pixel units.
  std::vector<double> dist(spatial * spatial);
  for (std::size_t a = 0; a < spatial; ++a) {
    for (std::size_t b = 0; b < spatial; ++b) {
      const double dy = static_cast<double>(a / g) - static_cast<double>(b / g);
      const double dx = static_cast<double>(a % g) - static_cast<double>(b % g);
      dist[a * spatial + b] = p * std::sqrt(dx * dx + dy * dy);
    }
  }

  std::vector<double> out(record.num_layers, 0.0);
  for (std::size_t layer = 0; layer < record.num_layers; ++layer) {
    double total = 0.0;
    for (std::size_t h = 0; h < record.num_heads; ++h) {
      for (std::size_t q = 0; q < spatial; ++q) {
        for (std::size_t k = 0; k < spatial; ++k) {
          total += record.at(layer, h, q + offset, k + offset) * dist[q * spatial + k];
        }
      }
    }
    out[layer] = total / static_cast<double>(record.num_heads * spatial);
  }
  return out;
}

}  // namespace moldkit
