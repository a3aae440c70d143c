#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldkit/backbone.hpp"
#include "moldkit/cache.hpp"
#include "moldkit/mold.hpp"
#include "moldkit/probes.hpp"
#include "moldkit/train.hpp"

namespace moldkit::cli {

// Flags shared by every subcommand.
struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool no_timestamp = false;
  unsigned threads = 1;
};

class Context {
 public:
  Context(GlobalOptions options, std::string command, std::ostream& out);

  const GlobalOptions& options() const { return options_; }
  std::filesystem::path out_path(const std::string& name) const;

  // Writes `bytes` to <out>/<name> and records it.
  std::filesystem::path write(const std::string& name, const std::string& bytes);
  // Records a file written by a library call.
  void record(const std::filesystem::path& path);

  // {command, config, results[, timestamp]} written as <command>_report.json.
  void report(nlohmann::json config, nlohmann::json results);

  // Updates <out>/outputs.json with this command's files.
  void finish();

  std::ostream& out() { return out_; }

 private:
  GlobalOptions options_;
  std::string command_;
  std::ostream& out_;
  std::vector<std::filesystem::path> produced_;
};

// --cache if given, else $MOLDKIT_CACHE_DIR/features.mcache, else
// <out>/features.mcache.
std::filesystem::path resolve_cache_path(const std::string& explicit_path, const Context& ctx);

struct Backbone {
  ViTConfig config;
  ViTWeights weights;
  std::string id;
};

// Config comes from the container metadata, else from `preset`. The default
// id is "<config name>:<hash of the weights file>".
Backbone load_backbone(const std::string& weights_path, const std::string& preset,
                       const std::string& id_override);

using Detector = std::variant<MoldHead, ProbeModel>;

struct LoadedCheckpoint {
  Detector detector;
  nlohmann::json sidecar;
  std::string backbone_id() const { return sidecar.value("backbone_id", ""); }
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Throws DataError when the checkpoint was trained on a different backbone.
void require_same_backbone(const LoadedCheckpoint& ckpt, const std::string& backbone_id,
                           const std::string& what);

EvalReport evaluate(const Detector& detector, const LabeledSet& set);
std::string detector_name(const Detector& detector);

// Selected split as a LabeledSet; throws DataError when it is empty.
LabeledSet split_or_throw(const EmbeddingCache& cache, const std::string& split);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace moldkit::cli
