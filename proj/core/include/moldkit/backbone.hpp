#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldkit/container.hpp"
#include "moldkit/tensor.hpp"

namespace moldkit {

enum class MlpActivation { gelu, quick_gelu };

struct ViTConfig {
  std::string name = "custom";
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  std::size_t embed_dim = 768;
  std::size_t num_layers = 12;
  std::size_t num_heads = 12;
  double mlp_ratio = 4.0;
  bool has_cls_token = true;
  std::size_t layer_group_size = 1;
  // CLIP applies a layernorm to the embedded tokens before the first block.
  bool embed_norm = false;
  MlpActivation mlp_activation = MlpActivation::gelu;
  double layernorm_eps = 1e-6;

  std::size_t grid_size() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid_size() * grid_size(); }
  std::size_t num_tokens() const { return num_patches() + (has_cls_token ? 1 : 0); }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t mlp_dim() const;
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }

  // Throws std::invalid_argument when the geometry is inconsistent.
  void validate() const;

  static ViTConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

void to_json(nlohmann::json& j, const ViTConfig& c);
void from_json(const nlohmann::json& j, ViTConfig& c);

struct BlockWeights {
  TensorF norm1_weight, norm1_bias;
  TensorF qkv_weight, qkv_bias;  // [d, 3d], columns ordered Q | K | V
  TensorF proj_weight, proj_bias;
  TensorF norm2_weight, norm2_bias;
  TensorF fc1_weight, fc1_bias;
  TensorF fc2_weight, fc2_bias;
};

// Frozen backbone parameters. Linear weights are stored [in, out].
struct ViTWeights {
  TensorF patch_weight, patch_bias;  // [3·p·p, d], patch flattened as (c, y, x)
  TensorF class_embedding;           // [d], present when has_cls_token
  TensorF pos_embedding;             // [tokens, d]
  TensorF embed_norm_weight, embed_norm_bias;
  std::vector<BlockWeights> blocks;
  TensorF norm_weight, norm_bias;
};

// Every tensor name and shape a container must provide for `config`.
std::vector<std::pair<std::string, Shape>> required_tensors(const ViTConfig& config);

ViTWeights weights_from_container(const TensorContainer& container, const ViTConfig& config);
TensorContainer weights_to_container(const ViTWeights& weights, const ViTConfig& config);
ViTWeights load_weights(const std::filesystem::path& path, const ViTConfig& config);
void save_weights(const std::filesystem::path& path, const ViTWeights& weights,
                  const ViTConfig& config);

// Seeded random backbone for tests and toy pipelines.
ViTWeights random_weights(const ViTConfig& config, std::uint64_t seed);

// Per-image stack of per-layer [CLS] embeddings, rows are layers 1..L.
struct LayerFeatureSet {
  std::string source_id;
  TensorF per_layer_cls;  // [L, d]

  std::size_t num_layers() const { return per_layer_cls.empty() ? 0 : per_layer_cls.dim(0); }
  std::size_t dim() const { return per_layer_cls.empty() ? 0 : per_layer_cls.dim(1); }
  // Zero-based layer row.
  std::span<const float> layer(std::size_t index) const { return per_layer_cls.row(index); }
};

// Softmax attention probabilities for every layer and head.
struct AttentionRecord {
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t num_tokens = 0;
  std::size_t grid_size = 0;   // spatial tokens form a grid_size × grid_size grid
  bool has_cls_token = true;   // token 0 is [CLS] when true
  std::vector<float> probs;    // [layer][head][query][key]

  float& at(std::size_t layer, std::size_t head, std::size_t q, std::size_t k) {
    return probs[((layer * num_heads + head) * num_tokens + q) * num_tokens + k];
  }
  float at(std::size_t layer, std::size_t head, std::size_t q, std::size_t k) const {
    return probs[((layer * num_heads + head) * num_tokens + q) * num_tokens + k];
  }
};

struct EncodeResult {
  LayerFeatureSet features;
  std::optional<AttentionRecord> attention;
};

// Forward pass through the pre-norm blocks. Row i of the result is the [CLS]
// residual after block i+1 (mean of patch tokens when the backbone has no
// [CLS]). Pixels are a normalized [3, H, W] tensor with H == W == image_size.
EncodeResult encode_layers(const ViTWeights& weights, const ViTConfig& config,
                           const TensorF& pixels, bool record_attention = false);

// Mean attention-weighted pixel distance between spatial query and key patch
// centers, averaged over heads and spatial queries, one value per layer.
// Attention mass on [CLS] contributes nothing.
std::vector<double> attention_distance(const AttentionRecord& record, const ViTConfig& config);

}  // namespace moldkit
