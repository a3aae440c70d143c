#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moldkit/dataset.hpp"
#include "moldkit/error.hpp"
#include "moldkit/metrics.hpp"
#include "moldkit/parallel.hpp"

namespace moldkit {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t patience_epochs = 5;
  double lr_decay_factor = 0.1;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  unsigned threads = 1;

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_ap = 0.0;
  double learning_rate = 0.0;
  bool improved = false;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_ap = 0.0;
  std::size_t lr_decays = 0;
  std::string stop_reason;  // "patience" or "max_epochs"
};

void to_json(nlohmann::json& j, const EpochRecord& r);
void to_json(nlohmann::json& j, const TrainingLog& log);

// A head the generic trainer can fit: scores a feature stack, accumulates the
// BCE gradient of one sample into a same-shaped buffer and exposes its
// parameters as flat spans in a fixed order.
template <typename M>
concept TrainableHead = requires(const M& cm, M& m, const LayerFeatureSet& f, int y) {
  { cm.score(f) } -> std::convertible_to<double>;
  { cm.accumulate_gradient(f, y, m) } -> std::convertible_to<double>;
  { cm.zeros_like() } -> std::same_as<M>;
  { m.parameters() } -> std::same_as<std::vector<std::span<double>>>;
  { cm.feature_layers() } -> std::convertible_to<std::size_t>;
  { cm.feature_dim() } -> std::convertible_to<std::size_t>;
};

class Adam {
 public:
  Adam(std::span<const std::span<double>> params, const TrainConfig& cfg);

  // One update with the given gradients (same layout as the parameters).
  void step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
            double learning_rate);

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

template <TrainableHead M>
std::vector<double> score_all(const M& head, const LabeledSet& set, unsigned threads = 1) {
  std::vector<double> scores(set.size());
  parallel_for(set.size(), threads, [&](std::size_t i) { scores[i] = head.score(set.features[i]); });
  return scores;
}

template <TrainableHead M>
double validation_ap(const M& head, const LabeledSet& val, unsigned threads = 1) {
  return average_precision(score_all(head, val, threads), val.labels);
}

namespace detail {

constexpr std::size_t kGradientChunk = 16;

// Mean loss and mean gradient over `batch`. Samples are reduced sequentially
// inside fixed-size chunks and chunks are summed in order, so the result does
// not depend on the thread count.
template <TrainableHead M>
double batch_gradient(const M& head, const LabeledSet& data, std::span<const std::size_t> batch,
                      M& grad, unsigned threads) {
  const std::size_t chunks = (batch.size() + kGradientChunk - 1) / kGradientChunk;
  std::vector<M> partial(chunks, head.zeros_like());
  std::vector<double> losses(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(batch.size(), (c + 1) * kGradientChunk);
    for (std::size_t k = c * kGradientChunk; k < end; ++k) {
      const std::size_t i = batch[k];
      losses[c] += head.accumulate_gradient(data.features[i], data.labels[i], partial[c]);
    }
  });
  grad = head.zeros_like();
  auto total = grad.parameters();
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t c = 0; c < chunks; ++c) {
    loss += losses[c];
    auto part = partial[c].parameters();
    for (std::size_t p = 0; p < total.size(); ++p) {
      for (std::size_t e = 0; e < total[p].size(); ++e) total[p][e] += part[p][e];
    }
  }
  for (auto& span : total) {
    for (auto& v : span) v *= inv;
  }
  return loss * inv;
}

}  // namespace detail

// Mini-batch Adam with early stopping on validation AP. When validation AP
// fails to improve for `patience_epochs` epochs the learning rate is scaled by
// `lr_decay_factor` once and the counter resets; the next expiry stops
// training. Returns the parameters of the best-validation epoch.
template <TrainableHead M>
M train_head(M head, const LabeledSet& train, const LabeledSet& val, const TrainConfig& cfg,
             TrainingLog* log_out = nullptr) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("training data is empty");
  if (val.empty()) throw std::invalid_argument("validation data is empty");
  train.validate(head.feature_layers(), head.feature_dim());
  val.validate(head.feature_layers(), head.feature_dim());

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  Adam adam(head.parameters(), cfg);
  TrainingLog log;
  M best = head;
  double best_ap = -std::numeric_limits<double>::infinity();
  double lr = cfg.learning_rate;
  std::size_t stale = 0;
  bool decayed = false;
  log.stop_reason = "max_epochs";
  M grad = head.zeros_like();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      loss_sum += detail::batch_gradient(head, train, batch, grad, cfg.threads);
      auto params = head.parameters();
      auto grads = grad.parameters();
      adam.step(params, grads, lr);
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    if (!std::isfinite(rec.train_loss)) {
      throw NumericFault("non-finite training loss in epoch " + std::to_string(epoch));
    }
    rec.val_ap = validation_ap(head, val, cfg.threads);
    rec.learning_rate = lr;
    if (rec.val_ap > best_ap) {
      best_ap = rec.val_ap;
      best = head;
      log.best_epoch = epoch;
      stale = 0;
      rec.improved = true;
    } else {
      ++stale;
    }
    log.epochs.push_back(rec);

    if (stale >= cfg.patience_epochs) {
      if (decayed) {
        log.stop_reason = "patience";
        break;
      }
      decayed = true;
      lr *= cfg.lr_decay_factor;
      ++log.lr_decays;
      stale = 0;
    }
  }
  log.best_val_ap = best_ap;
  if (log_out) *log_out = std::move(log);
  return best;
}

}  // namespace moldkit
