#include "moldkit/cache.hpp"

#include <cstring>
#include <nlohmann/json.hpp>
#include <set>

#include "moldkit/container.hpp"
#include "moldkit/parallel.hpp"

namespace moldkit {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'L', 'D', 'C', 'A', 'C', 'H'};

std::size_t padded_width(std::size_t longest) { return std::max<std::size_t>(8, (longest + 8) / 8 * 8); }

template <typename T>
void append_pod(std::string& out, T value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T read_pod(std::string_view bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof value);
  return value;
}

void append_fixed(std::string& out, const std::string& s, std::size_t width) {
  out += s;
  out.append(width - s.size(), '\0');
}

std::string read_fixed(std::string_view bytes, std::size_t offset, std::size_t width) {
  std::string_view field = bytes.substr(offset, width);
  return std::string(field.substr(0, field.find('\0')));
}

}  // namespace

LabeledSet EmbeddingCache::to_labeled_set() const {
  LabeledSet set;
  for (const auto& r : records) set.push_back(r.features, r.label, r.subset);
  return set;
}

LabeledSet EmbeddingCache::to_labeled_set(Split split) const {
  LabeledSet set;
  for (const auto& r : records) {
    if (r.split == split) set.push_back(r.features, r.label, r.subset);
  }
  return set;
}

std::string serialize_cache(const std::string& backbone_id, const std::vector<CacheRecord>& records) {
  CacheHeader h;
  h.backbone_id = backbone_id;
  h.count = records.size();
  std::size_t longest_id = 0, longest_subset = 0;
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw DataError("cache id collision: '" + r.id + "'");
    if (r.label != 0 && r.label != 1) throw DataError("cache record '" + r.id + "' has a non-binary label");
    longest_id = std::max(longest_id, r.id.size());
    longest_subset = std::max(longest_subset, r.subset.size());
    if (h.layers == 0) {
      h.layers = r.features.num_layers();
      h.dim = r.features.dim();
    } else if (r.features.num_layers() != h.layers || r.features.dim() != h.dim) {
      throw DataError("cache record '" + r.id + "' has a different feature shape");
    }
  }
  h.id_width = padded_width(longest_id);
  h.subset_width = padded_width(longest_subset);

  const nlohmann::json header = {{"backbone_id", h.backbone_id},   {"L", h.layers},
                                 {"d", h.dim},                     {"count", h.count},
                                 {"dtype", "F32"},                 {"id_width", h.id_width},
                                 {"subset_width", h.subset_width}, {"record_stride", h.record_stride()}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  append_pod<std::uint32_t>(out, kCacheVersion);
  append_pod<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + records.size() * h.record_stride() + 8);
  for (const auto& r : records) {
    append_fixed(out, r.id, h.id_width);
    append_fixed(out, r.subset, h.subset_width);
    out.push_back(static_cast<char>(r.label));
    out.push_back(static_cast<char>(r.split));
    const auto& v = r.features.per_layer_cls.values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  append_pod<std::uint64_t>(out, records.size());
  return out;
}

void write_cache(const std::filesystem::path& path, const std::string& backbone_id,
                 const std::vector<CacheRecord>& records) {
  write_file_bytes(path, serialize_cache(backbone_id, records));
}

EmbeddingCache parse_cache(std::string_view bytes, const CacheExpectation& expect) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw DataError("not an embedding cache (bad magic)");
  }
  const auto version = read_pod<std::uint32_t>(bytes, 8);
  if (version != kCacheVersion) {
    throw DataError("unsupported embedding cache version " + std::to_string(version));
  }
  const auto n = read_pod<std::uint64_t>(bytes, 12);
  if (n > bytes.size() - 20) throw DataError("embedding cache truncated in header");

  EmbeddingCache cache;
  CacheHeader& h = cache.header;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(20, n));
    h.backbone_id = header.at("backbone_id").get<std::string>();
    h.layers = header.at("L").get<std::size_t>();
    h.dim = header.at("d").get<std::size_t>();
    h.count = header.at("count").get<std::size_t>();
    h.id_width = header.at("id_width").get<std::size_t>();
    h.subset_width = header.at("subset_width").get<std::size_t>();
    if (header.at("dtype").get<std::string>() != "F32") throw DataError("embedding cache dtype must be F32");
    if (header.at("record_stride").get<std::size_t>() != h.record_stride()) {
      throw DataError("embedding cache record_stride disagrees with its field widths");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed embedding cache header: ") + e.what());
  }

  if (expect.backbone_id && *expect.backbone_id != h.backbone_id) {
    throw DataError("embedding cache was built with backbone '" + h.backbone_id + "' but '" +
                    *expect.backbone_id + "' was expected");
  }
  if ((expect.layers && *expect.layers != h.layers) || (expect.dim && *expect.dim != h.dim)) {
    throw DataError("embedding cache features are [" + std::to_string(h.layers) + ", " +
                    std::to_string(h.dim) + "], which does not match the expected shape");
  }

  const std::size_t body = 20 + n;
  const std::size_t stride = h.record_stride();
  if (bytes.size() != body + h.count * stride + 8) {
    throw DataError("embedding cache size does not match its header (truncated or corrupt)");
  }
  const auto trailer = read_pod<std::uint64_t>(bytes, bytes.size() - 8);
  if (trailer != h.count) throw DataError("embedding cache trailer count disagrees with header");

  std::set<std::string> ids;
  cache.records.reserve(h.count);
  for (std::size_t i = 0; i < h.count; ++i) {
    std::size_t off = body + i * stride;
    CacheRecord r;
    r.id = read_fixed(bytes, off, h.id_width);
    off += h.id_width;
    r.subset = read_fixed(bytes, off, h.subset_width);
    off += h.subset_width;
    r.label = static_cast<unsigned char>(bytes[off]);
    const auto split = static_cast<unsigned char>(bytes[off + 1]);
    off += 2;
    if (r.label > 1 || split > 2) throw DataError("embedding cache record " + std::to_string(i) + " is corrupt");
    r.split = static_cast<Split>(split);
    if (!ids.insert(r.id).second) throw DataError("cache id collision: '" + r.id + "'");
    std::vector<float> values(h.layers * h.dim);
    std::memcpy(values.data(), bytes.data() + off, values.size() * sizeof(float));
    r.features.source_id = r.id;
    r.features.per_layer_cls = TensorF({h.layers, h.dim}, std::move(values));
    cache.records.push_back(std::move(r));
  }
  return cache;
}

EmbeddingCache read_cache(const std::filesystem::path& path, const CacheExpectation& expect) {
  return parse_cache(read_file_bytes(path), expect);
}

EmbeddingCache build_cache(const Manifest& manifest, const ViTWeights& weights,
                           const ViTConfig& config, const std::string& backbone_id,
                           const std::filesystem::path& out_path, const PreprocessConfig& preprocess_cfg,
                           unsigned threads) {
  std::set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (!ids.insert(e.path).second) throw DataError("cache id collision: '" + e.path + "'");
  }
  std::vector<CacheRecord> records(manifest.entries.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    const TensorF pixels = to_pixels(load_image(manifest.resolve(e).string()), preprocess_cfg);
    CacheRecord& r = records[i];
    r.id = e.path;
    r.label = e.label;
    r.subset = e.subset;
    r.split = e.split;
    r.features = encode_layers(weights, config, pixels).features;
    r.features.source_id = e.path;
  });
  const std::string bytes = serialize_cache(backbone_id, records);
  write_file_bytes(out_path, bytes);
  return parse_cache(bytes);
}

}  // namespace moldkit
