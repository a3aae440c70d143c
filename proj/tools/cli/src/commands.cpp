#include "commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <memory>
#include <ostream>
#include <sstream>

#include "moldkit/container.hpp"
#include "moldkit/error.hpp"
#include "moldkit/golden.hpp"
#include "moldkit/image.hpp"
#include "moldkit/manifest.hpp"
#include "moldkit/metrics.hpp"
#include "moldkit/parallel.hpp"
#include "moldkit/perturb.hpp"
#include "moldkit/synth.hpp"

namespace moldkit::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_commas(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw std::invalid_argument("bad level '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--levels needs at least one value");
  return out;
}

// "all" / "all-layers" selects every layer.
std::set<std::size_t> parse_layer_set(const std::string& text, std::size_t num_layers) {
  std::set<std::size_t> out;
  if (text == "all" || text == "all-layers") {
    for (std::size_t i = 1; i <= num_layers; ++i) out.insert(i);
    return out;
  }
  for (const auto& item : split_commas(text)) {
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size()) {
      throw std::invalid_argument("bad layer index '" + item + "'");
    }
    out.insert(v);
  }
  return out;
}

void add_globals(CLI::App* sub, GlobalOptions& g) {
  sub->add_option("--seed", g.seed, "Run seed")->capture_default_str();
  sub->add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  sub->add_flag("--no-timestamp", g.no_timestamp, "Omit timestamps from reports");
  sub->add_option("--threads", g.threads, "Worker cap")->check(CLI::Range(1u, 1024u))->capture_default_str();
}

struct TrainFlags {
  double lr = TrainConfig{}.learning_rate;
  std::size_t batch_size = TrainConfig{}.batch_size;
  std::size_t patience = TrainConfig{}.patience_epochs;
  std::size_t max_epochs = TrainConfig{}.max_epochs;
  double weight_decay = 0.0;

  void add(CLI::App* sub) {
    sub->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--batch-size", batch_size)->capture_default_str();
    sub->add_option("--patience", patience, "Early-stopping patience (epochs)")->capture_default_str();
    sub->add_option("--max-epochs", max_epochs)->capture_default_str();
    sub->add_option("--weight-decay", weight_decay)->capture_default_str();
  }

  TrainConfig config(const GlobalOptions& g, std::uint64_t seed) const {
    TrainConfig c;
    c.learning_rate = lr;
    c.batch_size = batch_size;
    c.patience_epochs = patience;
    c.max_epochs = max_epochs;
    c.weight_decay = weight_decay;
    c.seed = seed;
    c.threads = g.threads;
    return c;
  }
};

struct BackboneFlags {
  std::string weights, preset, id;

  void add(CLI::App* sub) {
    sub->add_option("--weights", weights, "Backbone tensor container")->required()->check(CLI::ExistingFile);
    sub->add_option("--preset", preset, "Backbone preset when the weights carry no config");
    sub->add_option("--backbone-id", id, "Override the backbone id");
  }
};

EmbeddingCache load_cache(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("cache " + path.string() + " does not exist");
  return read_cache(path);
}

LabeledImages load_split_images(const Manifest& manifest, const std::string& split,
                                std::vector<std::string>* subsets, std::size_t limit = 0) {
  const Manifest m = split == "all" ? manifest : manifest.filter(parse_split(split));
  LabeledImages out;
  for (const auto& e : m.entries) {
    if (limit && out.images.size() == limit) break;
    out.images.push_back(load_image(m.resolve(e).string()));
    out.labels.push_back(e.label);
    if (subsets) subsets->push_back(e.subset);
  }
  if (out.images.empty()) throw DataError("manifest holds no '" + split + "' images");
  return out;
}

json training_summary(const TrainingLog& log) {
  return {{"best_epoch", log.best_epoch},
          {"best_val_ap", log.best_val_ap},
          {"epochs", log.epochs.size()},
          {"lr_decays", log.lr_decays},
          {"stop_reason", log.stop_reason}};
}

MoldHead train_mold(const EmbeddingCache& cache, const TrainConfig& cfg, std::size_t shared_dim,
                    std::size_t gate_hidden, TrainingLog* log) {
  const auto train = split_or_throw(cache, "train");
  const auto val = split_or_throw(cache, "val");
  auto dims = MoldDims::defaults(cache.header.layers, cache.header.dim);
  if (shared_dim) dims.shared_dim = shared_dim;
  if (gate_hidden) dims.gate_hidden = gate_hidden;
  return train_head(MoldHead::initialize(dims, cfg.seed), train, val, cfg, log);
}

// ---- subcommands ----

void add_make_backbone(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  auto* sub = app.add_subcommand("make-backbone", "Write a seeded random backbone for a preset");
  add_globals(sub, g);
  auto preset = std::make_shared<std::string>();
  sub->add_option("--preset", *preset, "Backbone preset")->required();
  sub->callback([&, preset] {
    action = [&, preset] {
      Context ctx(g, "make-backbone", out);
      const auto config = ViTConfig::preset(*preset);
      const auto path = ctx.out_path("backbone.safetensors");
      save_weights(path, random_weights(config, g.seed), config);
      ctx.record(path);
      const auto id = config.name + ":" + fnv1a_hex(read_file_bytes(path));
      ctx.report({{"preset", *preset}}, {{"weights", "backbone.safetensors"}, {"backbone_id", id}});
      ctx.finish();
    };
  });
}

void add_synth(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::size_t layers = 4, dim = 16, n_per_class = 500;
    std::vector<std::size_t> planted{2};
    std::vector<double> mu{4.0};
    std::string cache;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("synth", "Generate planted-signal features into a cache");
  add_globals(sub, g);
  sub->add_option("--layers", o->layers)->capture_default_str();
  sub->add_option("--dim", o->dim)->capture_default_str();
  sub->add_option("--n-per-class", o->n_per_class, "Samples per class and split")->capture_default_str();
  sub->add_option("--planted-layer", o->planted, "1-based layer carrying the signal (repeatable)");
  sub->add_option("--mu", o->mu, "Mean shift, one value or one per planted layer");
  sub->add_option("--cache", o->cache, "Output cache path");
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "synth", out);
      SynthSpec spec;
      spec.layers = o->layers;
      spec.dim = o->dim;
      spec.n_per_class = o->n_per_class;
      spec.seed = g.seed;
      spec.planted.clear();
      if (o->mu.size() != 1 && o->mu.size() != o->planted.size()) {
        throw std::invalid_argument("--mu takes one value or one per --planted-layer");
      }
      for (std::size_t i = 0; i < o->planted.size(); ++i) {
        spec.planted.push_back({o->planted[i], o->mu.size() == 1 ? o->mu[0] : o->mu[i]});
      }
      const auto data = synth_generate(spec);
      std::vector<CacheRecord> records;
      auto append = [&](const LabeledSet& set, Split split) {
        for (std::size_t i = 0; i < set.size(); ++i) {
          char id[32];
          std::snprintf(id, sizeof id, "%s-%06zu", split_name(split).c_str(), i);
          CacheRecord r;
          r.id = id;
          r.label = set.labels[i];
          r.subset = "synthetic";
          r.split = split;
          r.features = set.features[i];
          records.push_back(std::move(r));
        }
      };
      append(data.train, Split::train);
      append(data.val, Split::val);
      append(data.test, Split::test);
      const auto path = resolve_cache_path(o->cache, ctx);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      write_cache(path, "synthetic", records);
      ctx.record(path);
      json planted = json::array();
      for (const auto& p : spec.planted) planted.push_back({{"layer", p.layer}, {"mu", p.shift}});
      ctx.report({{"layers", spec.layers}, {"dim", spec.dim}, {"n_per_class", spec.n_per_class},
                  {"planted", planted}},
                 {{"cache", path.filename().string()},
                  {"backbone_id", "synthetic"},
                  {"count", records.size()}});
      ctx.finish();
    };
  });
}

void add_synth_images(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  auto o = std::make_shared<SynthImageSpec>();
  auto* sub = app.add_subcommand("synth-images", "Write synthetic grating images and a manifest");
  add_globals(sub, g);
  sub->add_option("--n-per-class", o->n_per_class, "Images per class and split")->capture_default_str();
  sub->add_option("--size", o->size)->capture_default_str();
  sub->add_option("--period", o->pattern_period, "Grating period in pixels")->capture_default_str();
  sub->add_option("--amplitude", o->amplitude)->capture_default_str();
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "synth-images", out);
      Manifest manifest;
      for (Split split : {Split::train, Split::val, Split::test}) {
        SynthImageSpec spec = *o;
        spec.seed = g.seed * 3 + static_cast<std::uint64_t>(split);
        const auto imgs = synth_images(spec);
        for (std::size_t i = 0; i < imgs.images.size(); ++i) {
          char name[64];
          std::snprintf(name, sizeof name, "images/%s-%04zu.png", split_name(split).c_str(), i);
          ctx.write(name, encode_png(imgs.images[i]));
          manifest.entries.push_back({name, imgs.labels[i], "grating", split});
        }
      }
      ctx.write("manifest.jsonl", manifest_to_text(manifest));
      ctx.report({{"n_per_class", o->n_per_class}, {"size", o->size}, {"period", o->pattern_period},
                  {"amplitude", o->amplitude}},
                 {{"manifest", "manifest.jsonl"}, {"images", manifest.entries.size()}});
      ctx.finish();
    };
  });
}

void add_extract(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string manifest, cache;
    BackboneFlags backbone;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("extract", "Encode manifest images into a per-layer feature cache");
  add_globals(sub, g);
  sub->add_option("--manifest", o->manifest)->required()->check(CLI::ExistingFile);
  o->backbone.add(sub);
  sub->add_option("--cache", o->cache, "Output cache path");
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "extract", out);
      const auto manifest = parse_manifest(o->manifest);
      if (manifest.entries.empty()) throw DataError("manifest " + o->manifest + " is empty");
      const auto bb = load_backbone(o->backbone.weights, o->backbone.preset, o->backbone.id);
      PreprocessConfig pre;
      pre.size = bb.config.image_size;
      const auto path = resolve_cache_path(o->cache, ctx);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      const auto cache = build_cache(manifest, bb.weights, bb.config, bb.id, path, pre, g.threads);
      ctx.record(path);
      ctx.report({{"backbone", bb.config}, {"image_size", pre.size}},
                 {{"cache", path.filename().string()},
                  {"backbone_id", bb.id},
                  {"count", cache.header.count}});
      ctx.finish();
    };
  });
}

void add_train_mold(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string cache;
    TrainFlags train;
    std::size_t shared_dim = 0, gate_hidden = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("train-mold", "Train the gated multi-layer head on a cache");
  add_globals(sub, g);
  sub->add_option("--cache", o->cache, "Feature cache");
  o->train.add(sub);
  sub->add_option("--shared-dim", o->shared_dim, "Projection width (0 = feature dim)");
  sub->add_option("--gate-hidden", o->gate_hidden, "Gate hidden width (0 = dim / 4)");
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "train-mold", out);
      const auto cache = load_cache(resolve_cache_path(o->cache, ctx));
      const auto cfg = o->train.config(g, g.seed);
      TrainingLog log;
      const auto head = train_mold(cache, cfg, o->shared_dim, o->gate_hidden, &log);
      const auto path = ctx.out_path("mold.safetensors");
      save_mold_checkpoint(path, head,
                           {{"backbone_id", cache.header.backbone_id},
                            {"seed", g.seed},
                            {"train_config", cfg},
                            {"best_val_ap", log.best_val_ap}});
      ctx.record(path);
      ctx.record(sidecar_path(path));
      ctx.write("training_log.json", json(log).dump(2) + "\n");
      ctx.report({{"train_config", cfg}, {"dims", {{"L", head.dims.layers}, {"d", head.dims.feature_dim},
                                                   {"d_s", head.dims.shared_dim}, {"d_g", head.dims.gate_hidden}}}},
                 {{"checkpoint", "mold.safetensors"}, {"training", training_summary(log)}});
      ctx.finish();
    };
  });
}

void add_train_probe(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string cache, head = "linear";
    std::size_t layer = 0, group = 1, hidden = 0;
    TrainFlags train;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("train-probe", "Train a probe on one layer (or layer group)");
  add_globals(sub, g);
  sub->add_option("--cache", o->cache, "Feature cache");
  sub->add_option("--layer", o->layer, "1-based layer (last layer of the group)")->required();
  sub->add_option("--group", o->group, "Group size")->capture_default_str();
  sub->add_option("--head", o->head, "linear | two-layer")->capture_default_str();
  sub->add_option("--hidden", o->hidden, "Two-layer hidden width (0 = feature dim)");
  o->train.add(sub);
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "train-probe", out);
      const auto cache = load_cache(resolve_cache_path(o->cache, ctx));
      ProbeSpec spec;
      spec.layer = o->layer;
      spec.group_size = o->group;
      spec.kind = parse_probe_kind(o->head);
      spec.hidden_dim = o->hidden;
      spec.train_config = o->train.config(g, g.seed);
      spec.validate(cache.header.layers);
      TrainingLog log;
      const auto probe =
          train_probe(spec, split_or_throw(cache, "train"), split_or_throw(cache, "val"), &log);
      const std::string file = "probe-" + probe.name() + ".safetensors";
      const auto path = ctx.out_path(file);
      save_probe_checkpoint(path, probe,
                            {{"backbone_id", cache.header.backbone_id},
                             {"seed", g.seed},
                             {"train_config", spec.train_config},
                             {"best_val_ap", log.best_val_ap}});
      ctx.record(path);
      ctx.record(sidecar_path(path));
      ctx.write("training_log-" + probe.name() + ".json", json(log).dump(2) + "\n");
      ctx.report({{"layer", spec.layer}, {"group", spec.group_size}, {"head", o->head},
                  {"train_config", spec.train_config}},
                 {{"checkpoint", file}, {"probe", probe.name()}, {"training", training_summary(log)}});
      ctx.finish();
    };
  });
}

void add_eval(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string checkpoint, cache, split = "test", method;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("eval", "Evaluate a checkpoint on a cache split");
  add_globals(sub, g);
  sub->add_option("--checkpoint", o->checkpoint)->required()->check(CLI::ExistingFile);
  sub->add_option("--cache", o->cache, "Feature cache");
  sub->add_option("--split", o->split, "train | val | test | all")->capture_default_str();
  sub->add_option("--method", o->method, "Row label in the CSV table");
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "eval", out);
      const auto ckpt = load_checkpoint(o->checkpoint);
      const auto cache = load_cache(resolve_cache_path(o->cache, ctx));
      require_same_backbone(ckpt, cache.header.backbone_id, "the cache");
      const auto report = evaluate(ckpt.detector, split_or_throw(cache, o->split));
      const std::string method = o->method.empty() ? detector_name(ckpt.detector) : o->method;
      ctx.write("eval_report.csv", report_to_csv(report, method));
      ctx.report({{"checkpoint", fs::path(o->checkpoint).filename().string()},
                  {"split", o->split},
                  {"detector", detector_name(ckpt.detector)}},
                 report);
      out << "mean AP " << fmt(report.mean_ap) << ", mean ACC " << fmt(report.mean_accuracy) << "\n";
      ctx.finish();
    };
  });
}

void add_overlap(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::vector<std::string> probes;
    std::string cache, split = "test", statistic = "jaccard";
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("overlap", "Misclassification overlap between probes");
  add_globals(sub, g);
  sub->add_option("--probe", o->probes, "Probe checkpoint (repeatable, >= 2)")->required()->check(CLI::ExistingFile);
  sub->add_option("--cache", o->cache, "Feature cache");
  sub->add_option("--split", o->split)->capture_default_str();
  sub->add_option("--statistic", o->statistic, "jaccard | overlap_coefficient | fraction_of_test | intersection")
      ->capture_default_str();
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "overlap", out);
      const auto cache = load_cache(resolve_cache_path(o->cache, ctx));
      std::vector<ProbeModel> probes;
      for (const auto& path : o->probes) {
        auto ckpt = load_checkpoint(path);
        require_same_backbone(ckpt, cache.header.backbone_id, "the cache");
        auto* p = std::get_if<ProbeModel>(&ckpt.detector);
        if (!p) throw std::invalid_argument("overlap takes probe checkpoints; " + path + " is not one");
        probes.push_back(*p);
      }
      const auto m = overlap_matrix(probes, split_or_throw(cache, o->split));
      ctx.write("overlap.csv", overlap_to_csv(m, o->statistic));
      ctx.report({{"split", o->split}, {"statistic", o->statistic}},
                 {{"names", m.names},
                  {"jaccard", m.jaccard},
                  {"overlap_coefficient", m.overlap_coefficient},
                  {"fraction_of_test", m.fraction_of_test},
                  {"intersection", m.intersection},
                  {"empty_error_set", m.empty_error_set},
                  {"error_counts", [&] {
                     std::vector<std::size_t> n;
                     for (const auto& e : m.error_ids) n.push_back(e.size());
                     return n;
                   }()},
                  {"test_size", m.test_size}});
      ctx.finish();
    };
  });
}

void add_ablate(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string checkpoint, cache, exclude, split = "test";
    std::size_t sweep = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("ablate", "Evaluate a trained head with layers masked out of the gate");
  add_globals(sub, g);
  sub->add_option("--checkpoint", o->checkpoint)->required()->check(CLI::ExistingFile);
  sub->add_option("--cache", o->cache, "Feature cache");
  sub->add_option("--exclude", o->exclude, "Comma-separated 1-based layers, or 'all'");
  sub->add_option("--sweep", o->sweep, "Also mask every consecutive block of this many layers");
  sub->add_option("--split", o->split)->capture_default_str();
  sub->callback([&, o] {
    action = [&, o] {
      if (o->exclude.empty() && o->sweep == 0) throw std::invalid_argument("ablate needs --exclude or --sweep");
      Context ctx(g, "ablate", out);
      const auto ckpt = load_checkpoint(o->checkpoint);
      const auto* head = std::get_if<MoldHead>(&ckpt.detector);
      if (!head) throw std::invalid_argument("ablate takes a MoLD checkpoint");
      const std::size_t L = head->dims.layers;
      std::optional<std::set<std::size_t>> excluded;
      if (!o->exclude.empty()) {
        excluded = parse_layer_set(o->exclude, L);
        if (excluded->size() == L && std::all_of(excluded->begin(), excluded->end(),
                                                 [&](std::size_t i) { return i >= 1 && i <= L; })) {
          throw std::invalid_argument("cannot exclude every layer");
        }
      }
      if (o->sweep > L - 1 && o->sweep != 0) throw std::invalid_argument("--sweep must be below the layer count");
      const auto cache = load_cache(resolve_cache_path(o->cache, ctx));
      require_same_backbone(ckpt, cache.header.backbone_id, "the cache");
      const auto eval = split_or_throw(cache, o->split);
      const auto baseline = evaluate_head(*head, eval);
      json results{{"baseline", baseline}};
      std::string csv = "excluded,mean_acc,mean_ap,ap_drop\n";
      auto row = [&](const std::set<std::size_t>& ex) {
        const auto r = ablate_layers(*head, ex, eval);
        std::string label;
        for (auto i : ex) label += (label.empty() ? "" : " ") + std::to_string(i);
        csv += label + "," + fmt(r.mean_accuracy) + "," + fmt(r.mean_ap) + "," +
               fmt(baseline.mean_ap - r.mean_ap) + "\n";
        return json{{"excluded", ex}, {"report", r}, {"ap_drop", baseline.mean_ap - r.mean_ap}};
      };
      if (excluded) results["ablated"] = row(*excluded);
      if (o->sweep) {
        json sweep = json::array();
        for (std::size_t start = 1; start + o->sweep - 1 <= L; start += o->sweep) {
          std::set<std::size_t> ex;
          for (std::size_t i = start; i < start + o->sweep; ++i) ex.insert(i);
          sweep.push_back(row(ex));
        }
        results["sweep"] = sweep;
      }
      ctx.write("ablation.csv", csv);
      ctx.report({{"checkpoint", fs::path(o->checkpoint).filename().string()},
                  {"exclude", o->exclude},
                  {"sweep", o->sweep},
                  {"split", o->split}},
                 results);
      ctx.finish();
    };
  });
}

PerturbationSpec level_spec(PerturbationKind kind, double level, std::uint64_t seed) {
  switch (kind) {
    case PerturbationKind::gaussian_blur: return PerturbationSpec::blur(level);
    case PerturbationKind::jpeg: {
      if (level != static_cast<int>(level)) throw std::invalid_argument("JPEG quality must be an integer");
      return PerturbationSpec::jpeg_quality(static_cast<int>(level));
    }
    case PerturbationKind::rescale: return PerturbationSpec::rescaled(level);
    case PerturbationKind::cutmix: return PerturbationSpec::cutmix_box(level, seed);
    case PerturbationKind::jigsaw: {
      if (level < 1 || level != static_cast<std::size_t>(level)) {
        throw std::invalid_argument("jigsaw grid must be a positive integer");
      }
      return PerturbationSpec::jigsaw_grid(static_cast<std::size_t>(level), seed);
    }
    case PerturbationKind::none: return {};
  }
  return {};
}

void add_perturb_eval(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string checkpoint, manifest, kind, levels, split = "test", partner = "same-label";
    BackboneFlags backbone;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("perturb-eval", "Sweep a perturbation and evaluate a checkpoint at each level");
  add_globals(sub, g);
  sub->add_option("--checkpoint", o->checkpoint)->required()->check(CLI::ExistingFile);
  sub->add_option("--manifest", o->manifest)->required()->check(CLI::ExistingFile);
  o->backbone.add(sub);
  sub->add_option("--kind", o->kind, "blur | jpeg | rescale | cutmix | jigsaw")->required();
  sub->add_option("--levels", o->levels, "Comma-separated sigma / quality / scale / fraction / grid")->required();
  sub->add_option("--split", o->split)->capture_default_str();
  sub->add_option("--partner", o->partner, "cutmix partner: same-label | self")->capture_default_str();
  sub->callback([&, o] {
    action = [&, o] {
      const auto kind = parse_perturbation_kind(o->kind);
      const auto levels = parse_levels(o->levels);
      if (o->partner != "same-label" && o->partner != "self") {
        throw std::invalid_argument("--partner must be same-label or self");
      }
      Context ctx(g, "perturb-eval", out);
      const auto ckpt = load_checkpoint(o->checkpoint);
      const auto bb = load_backbone(o->backbone.weights, o->backbone.preset, o->backbone.id);
      require_same_backbone(ckpt, bb.id, "the backbone");
      std::vector<std::string> subsets;
      const auto images = load_split_images(parse_manifest(o->manifest), o->split, &subsets);
      PreprocessConfig pre;
      pre.size = bb.config.image_size;
      json per_level = json::array();
      std::string csv = o->kind + ",mean_acc,mean_ap\n";
      for (double level : levels) {
        SemanticTransform t;
        t.spec = level_spec(kind, level, g.seed);
        t.partner = o->partner == "self" ? CutmixPartner::self : CutmixPartner::same_label_next;
        auto set = encode_transformed(bb.weights, bb.config, t, images, pre, g.threads);
        set.subsets = subsets;
        const auto report = evaluate(ckpt.detector, set);
        per_level.push_back({{"level", level}, {"report", report}});
        csv += fmt(level) + "," + fmt(report.mean_accuracy) + "," + fmt(report.mean_ap) + "\n";
      }
      ctx.write("perturb.csv", csv);
      ctx.report({{"checkpoint", fs::path(o->checkpoint).filename().string()},
                  {"kind", perturbation_kind_name(kind)},
                  {"levels", levels},
                  {"split", o->split},
                  {"partner", o->partner},
                  {"codecs", codec_versions()}},
                 {{"levels", per_level}, {"detector", detector_name(ckpt.detector)}});
      ctx.finish();
    };
  });
}

void add_attn_distance(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string manifest, split = "all";
    std::size_t limit = 0;
    BackboneFlags backbone;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("attn-distance", "Mean attention distance per layer");
  add_globals(sub, g);
  sub->add_option("--manifest", o->manifest)->required()->check(CLI::ExistingFile);
  o->backbone.add(sub);
  sub->add_option("--split", o->split)->capture_default_str();
  sub->add_option("--limit", o->limit, "Use at most this many images (0 = all)");
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "attn-distance", out);
      const auto bb = load_backbone(o->backbone.weights, o->backbone.preset, o->backbone.id);
      const auto images = load_split_images(parse_manifest(o->manifest), o->split, nullptr, o->limit);
      PreprocessConfig pre;
      pre.size = bb.config.image_size;
      std::vector<std::vector<double>> per_image(images.images.size());
      parallel_for(per_image.size(), g.threads, [&](std::size_t i) {
        const auto r = encode_layers(bb.weights, bb.config, to_pixels(images.images[i], pre), true);
        per_image[i] = attention_distance(*r.attention, bb.config);
      });
      std::vector<double> mean(bb.config.num_layers, 0.0);
      for (const auto& d : per_image)
        for (std::size_t l = 0; l < mean.size(); ++l) mean[l] += d[l] / static_cast<double>(per_image.size());
      std::string csv = "layer,distance_px\n";
      for (std::size_t l = 0; l < mean.size(); ++l) csv += std::to_string(l + 1) + "," + fmt(mean[l]) + "\n";
      ctx.write("attn_distance.csv", csv);
      ctx.report({{"backbone_id", bb.id}, {"split", o->split}, {"limit", o->limit}},
                 {{"mean_distance_px", mean}, {"images", per_image.size()}});
      ctx.finish();
    };
  });
}

void add_gate_stats(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string cache, split = "test";
    std::size_t seeds = 3;
    TrainFlags train;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("gate-stats", "Train heads over several seeds and summarize their gates");
  add_globals(sub, g);
  sub->add_option("--cache", o->cache, "Feature cache");
  sub->add_option("--seeds", o->seeds, "Number of seeds (run seed, run seed + 1, ...)")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000}))
      ->capture_default_str();
  sub->add_option("--split", o->split, "Probe set for the gate averages")->capture_default_str();
  o->train.add(sub);
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "gate-stats", out);
      const auto cache = load_cache(resolve_cache_path(o->cache, ctx));
      const auto probe_set = split_or_throw(cache, o->split);
      std::vector<MoldHead> heads;
      json runs = json::array();
      for (std::size_t s = 0; s < o->seeds; ++s) {
        const auto cfg = o->train.config(g, g.seed + s);
        TrainingLog log;
        heads.push_back(train_mold(cache, cfg, 0, 0, &log));
        runs.push_back({{"seed", cfg.seed},
                        {"best_epoch", log.best_epoch},
                        {"test_ap", evaluate_head(heads.back(), probe_set).mean_ap}});
      }
      const auto stats = gating_stats(heads, probe_set.features);
      std::string csv = "layer,mean,std\n";
      for (std::size_t l = 0; l < stats.mean.size(); ++l) {
        csv += std::to_string(l + 1) + "," + fmt(stats.mean[l]) + "," + fmt(stats.std[l]) + "\n";
      }
      ctx.write("gate_stats.csv", csv);
      ctx.report({{"seeds", o->seeds}, {"split", o->split}, {"train_config", o->train.config(g, g.seed)}},
                 {{"mean", stats.mean}, {"std", stats.std}, {"runs", runs}});
      ctx.finish();
    };
  });
}

void add_export_features(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string cache, split = "all";
    std::size_t layer = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("export-features", "Dump per-layer features to CSV");
  add_globals(sub, g);
  sub->add_option("--cache", o->cache, "Feature cache");
  sub->add_option("--split", o->split)->capture_default_str();
  sub->add_option("--layer", o->layer, "Only this 1-based layer (0 = all)");
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "export-features", out);
      const auto cache = load_cache(resolve_cache_path(o->cache, ctx));
      const std::size_t L = cache.header.layers, d = cache.header.dim;
      if (o->layer > L) throw std::invalid_argument("--layer outside [1, " + std::to_string(L) + "]");
      std::string csv = "id,label,subset,split,layer";
      for (std::size_t k = 0; k < d; ++k) csv += ",f" + std::to_string(k);
      csv += "\n";
      std::size_t rows = 0;
      char buf[32];
      for (const auto& r : cache.records) {
        if (o->split != "all" && r.split != parse_split(o->split)) continue;
        for (std::size_t l = 1; l <= L; ++l) {
          if (o->layer && l != o->layer) continue;
          csv += r.id + "," + std::to_string(r.label) + "," + r.subset + "," + split_name(r.split) + "," +
                 std::to_string(l);
          for (float v : r.features.layer(l - 1)) {
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
            csv += ",";
            csv.append(buf, end);
          }
          csv += "\n";
          ++rows;
        }
      }
      ctx.write("features.csv", csv);
      ctx.report({{"split", o->split}, {"layer", o->layer}}, {{"rows", rows}, {"file", "features.csv"}});
      ctx.finish();
    };
  });
}

void add_golden_check(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  struct Opts {
    std::string fixture, weights;
    double tolerance = 1e-3;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("golden-check", "Compare encode_layers against an exported parity fixture");
  add_globals(sub, g);
  sub->add_option("--fixture", o->fixture, "Golden fixture container")->required()->check(CLI::ExistingFile);
  sub->add_option("--weights", o->weights, "Backbone tensor container")->required()->check(CLI::ExistingFile);
  sub->add_option("--tolerance", o->tolerance, "Max-abs tolerance")->capture_default_str();
  sub->callback([&, o] {
    action = [&, o] {
      Context ctx(g, "golden-check", out);
      const auto fixture = load_golden(o->fixture);
      const auto r = compare_golden(load_weights(o->weights, fixture.config), fixture);
      ctx.report({{"fixture", o->fixture}, {"weights", o->weights}, {"tolerance", o->tolerance}},
                 {{"config", fixture.config.name},
                  {"source", fixture.source},
                  {"max_abs", r.max_abs},
                  {"per_layer_max_abs", r.per_layer_max_abs},
                  {"pass", r.within(o->tolerance)}});
      ctx.finish();
      out << "max abs " << fmt(r.max_abs) << (r.within(o->tolerance) ? " within " : " exceeds ")
          << fmt(o->tolerance) << "\n";
      if (!r.within(o->tolerance)) throw DataError("golden parity exceeds tolerance");
    };
  });
}

}  // namespace

void register_commands(CLI::App& app, GlobalOptions& g, std::function<void()>& action, std::ostream& out) {
  add_synth(app, g, action, out);
  add_synth_images(app, g, action, out);
  add_make_backbone(app, g, action, out);
  add_extract(app, g, action, out);
  add_train_mold(app, g, action, out);
  add_train_probe(app, g, action, out);
  add_eval(app, g, action, out);
  add_overlap(app, g, action, out);
  add_ablate(app, g, action, out);
  add_perturb_eval(app, g, action, out);
  add_attn_distance(app, g, action, out);
  add_gate_stats(app, g, action, out);
  add_export_features(app, g, action, out);
  add_golden_check(app, g, action, out);
}

}  // namespace moldkit::cli
