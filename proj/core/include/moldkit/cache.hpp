#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "moldkit/backbone.hpp"
#include "moldkit/dataset.hpp"
#include "moldkit/image.hpp"
#include "moldkit/manifest.hpp"

namespace moldkit {

// Embedding cache layout (all integers little-endian):
//
//   "MOLDCACH"            8-byte magic
//   u32 version           kCacheVersion
//   u64 n, n bytes        JSON header {backbone_id, L, d, count, dtype,
//                         id_width, subset_width, record_stride}
//   count records         id[id_width] subset[subset_width] u8 label u8 split
//                         f32[L·d] features, strings NUL padded
//   u64 count             trailer
inline constexpr std::uint32_t kCacheVersion = 1;

struct CacheHeader {
  std::string backbone_id;
  std::size_t layers = 0;
  std::size_t dim = 0;
  std::size_t count = 0;
  std::size_t id_width = 0;
  std::size_t subset_width = 0;

  std::size_t record_stride() const { return id_width + subset_width + 2 + layers * dim * 4; }
};

struct CacheRecord {
  std::string id;
  int label = 0;
  std::string subset;
  Split split = Split::train;
  LayerFeatureSet features;
};

struct EmbeddingCache {
  CacheHeader header;
  std::vector<CacheRecord> records;

  LabeledSet to_labeled_set() const;
  LabeledSet to_labeled_set(Split split) const;
};

// Field widths are derived from the records, so identical records give
// byte-identical output. Throws DataError on duplicate ids.
std::string serialize_cache(const std::string& backbone_id, const std::vector<CacheRecord>& records);
void write_cache(const std::filesystem::path& path, const std::string& backbone_id,
                 const std::vector<CacheRecord>& records);

struct CacheExpectation {
  std::optional<std::string> backbone_id;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> dim;
};

EmbeddingCache parse_cache(std::string_view bytes, const CacheExpectation& expect = {});
EmbeddingCache read_cache(const std::filesystem::path& path, const CacheExpectation& expect = {});

// Encodes every manifest image with the frozen backbone (fanned out over
// `threads` workers) and writes records in manifest order.
EmbeddingCache build_cache(const Manifest& manifest, const ViTWeights& weights,
                           const ViTConfig& config, const std::string& backbone_id,
                           const std::filesystem::path& out_path, const PreprocessConfig& preprocess,
                           unsigned threads = 1);

}  // namespace moldkit
