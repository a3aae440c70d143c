#include "context.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <map>
#include <ostream>

#include "moldkit/container.hpp"
#include "moldkit/error.hpp"
#include "moldkit/manifest.hpp"

namespace moldkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Context::Context(GlobalOptions options, std::string command, std::ostream& out)
    : options_(std::move(options)), command_(std::move(command)), out_(out) {
  fs::create_directories(options_.out_dir);
}

fs::path Context::out_path(const std::string& name) const { return fs::path(options_.out_dir) / name; }

fs::path Context::write(const std::string& name, const std::string& bytes) {
  const auto path = out_path(name);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_bytes(path, bytes);
  record(path);
  return path;
}

void Context::record(const fs::path& path) { produced_.push_back(path); }

void Context::report(json config, json results) {
  json r;
  r["command"] = command_;
  r["config"] = std::move(config);
  r["config"]["seed"] = options_.seed;
  r["results"] = std::move(results);
  if (!options_.no_timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    r["timestamp"] = buf;
  }
  const std::string name = command_ + "_report.json";
  write(name, r.dump(2) + "\n");
  out_ << "wrote " << out_path(name).string() << "\n";
}

void Context::finish() {
  const auto manifest = out_path("outputs.json");
  json doc = json::object();
  if (fs::exists(manifest)) {
    try {
      doc = json::parse(read_file_bytes(manifest));
    } catch (const std::exception&) {
      doc = json::object();
    }
  }
  std::map<std::string, json> files;
  if (doc.contains("files")) {
    for (const auto& f : doc["files"]) files[f.at("path").get<std::string>()] = f;
  }
  const fs::path out_dir = fs::path(options_.out_dir);
  for (const auto& p : produced_) {
    std::error_code ec;
    auto rel = fs::relative(p, out_dir, ec);
    const std::string key =
        (ec || rel.empty() || *rel.begin() == "..") ? fs::absolute(p).string() : rel.generic_string();
    files[key] = json{{"path", key}, {"command", command_}, {"bytes", fs::file_size(p)}};
  }
  json list = json::array();
  for (auto& [k, v] : files) list.push_back(v);
  doc = json{{"files", list}};
  write_file_bytes(manifest, doc.dump(2) + "\n");
}

fs::path resolve_cache_path(const std::string& explicit_path, const Context& ctx) {
  if (!explicit_path.empty()) return explicit_path;
  if (const char* dir = std::getenv("MOLDKIT_CACHE_DIR"); dir && *dir) {
    return fs::path(dir) / "features.mcache";
  }
  return ctx.out_path("features.mcache");
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Backbone load_backbone(const std::string& weights_path, const std::string& preset,
                       const std::string& id_override) {
  const std::string bytes = read_file_bytes(weights_path);
  const auto container = TensorContainer::parse(bytes);
  Backbone b;
  const auto& meta = container.metadata();
  if (auto it = meta.find("config"); it != meta.end()) {
    b.config = json::parse(it->second).get<ViTConfig>();
    if (!preset.empty() && preset != b.config.name) {
      throw DataError("weights " + weights_path + " declare config '" + b.config.name +
                      "' but --preset is '" + preset + "'");
    }
  } else if (!preset.empty()) {
    b.config = ViTConfig::preset(preset);
  } else {
    throw DataError("weights " + weights_path + " carry no config; pass --preset");
  }
  b.weights = weights_from_container(container, b.config);
  b.id = id_override.empty() ? b.config.name + ":" + fnv1a_hex(bytes) : id_override;
  return b;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const auto sidecar = json::parse(read_file_bytes(sidecar_path(path)));
  const std::string kind = sidecar.value("kind", "");
  if (kind == "mold") {
    auto [head, side] = load_mold_checkpoint(path);
    return {std::move(head), std::move(side)};
  }
  if (kind == "probe") {
    auto [probe, side] = load_probe_checkpoint(path);
    return {std::move(probe), std::move(side)};
  }
  throw DataError("checkpoint " + path + " has unknown kind '" + kind + "'");
}

void require_same_backbone(const LoadedCheckpoint& ckpt, const std::string& backbone_id,
                           const std::string& what) {
  if (ckpt.backbone_id() != backbone_id) {
    throw DataError("backbone mismatch: checkpoint was trained on features from '" +
                    ckpt.backbone_id() + "' but " + what + " comes from '" + backbone_id + "'");
  }
}

EvalReport evaluate(const Detector& detector, const LabeledSet& set) {
  return std::visit(
      [&](const auto& d) -> EvalReport {
        if constexpr (std::is_same_v<std::decay_t<decltype(d)>, MoldHead>) {
          return evaluate_head(d, set);
        } else {
          return evaluate_probe(d, set);
        }
      },
      detector);
}

std::string detector_name(const Detector& detector) {
  if (const auto* p = std::get_if<ProbeModel>(&detector)) return p->name();
  return "MoLD";
}

LabeledSet split_or_throw(const EmbeddingCache& cache, const std::string& split) {
  LabeledSet s = split == "all" ? cache.to_labeled_set() : cache.to_labeled_set(parse_split(split));
  if (s.empty()) throw DataError("cache holds no '" + split + "' samples");
  return s;
}

}  // namespace moldkit::cli
