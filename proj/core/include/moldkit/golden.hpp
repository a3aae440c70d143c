#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "moldkit/backbone.hpp"

namespace moldkit {

// Cross-implementation parity fixture, stored in the tensor container format:
//
//   tensor "input"  F32 [3, S, S]  normalized pixels, S = config.image_size
//   tensor "cls"    F32 [L, d]     reference per-layer [CLS] outputs
//   metadata "config"   ViTConfig JSON
//   metadata "seed"     decimal seed of the input tensor
//   metadata "source"   free-form id of the producing implementation
struct GoldenFixture {
  ViTConfig config;
  std::uint64_t seed = 0;
  std::string source;
  TensorF input;
  TensorF cls;
};

// Seeded standard-normal input tensor of shape [3, S, S].
TensorF golden_input(const ViTConfig& config, std::uint64_t seed);

// Fixture whose reference outputs come from this library's encode_layers.
GoldenFixture make_golden(const ViTWeights& weights, const ViTConfig& config, std::uint64_t seed);

TensorContainer golden_to_container(const GoldenFixture& fixture);
// Throws DataError on missing tensors/metadata or shapes that disagree with
// the embedded config.
GoldenFixture golden_from_container(const TensorContainer& container);
void save_golden(const std::filesystem::path& path, const GoldenFixture& fixture);
GoldenFixture load_golden(const std::filesystem::path& path);

struct GoldenComparison {
  double max_abs = 0.0;
  std::vector<double> per_layer_max_abs;
  bool within(double tolerance = 1e-3) const { return max_abs <= tolerance; }
};

GoldenComparison compare_golden(const ViTWeights& weights, const GoldenFixture& fixture);

}  // namespace moldkit
