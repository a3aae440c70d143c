#include "moldkit/train.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace moldkit {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (patience_epochs == 0) throw std::invalid_argument("patience_epochs must be >= 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw std::invalid_argument("lr_decay_factor must lie in (0, 1]");
  }
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("adam_eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be nonnegative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},     {"batch_size", c.batch_size},
       {"patience_epochs", c.patience_epochs}, {"lr_decay_factor", c.lr_decay_factor},
       {"max_epochs", c.max_epochs},           {"seed", c.seed},
       {"adam_beta1", c.adam_beta1},           {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},               {"weight_decay", c.weight_decay}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.patience_epochs = j.value("patience_epochs", d.patience_epochs);
  c.lr_decay_factor = j.value("lr_decay_factor", d.lr_decay_factor);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.seed = j.value("seed", d.seed);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"train_loss", r.train_loss},
       {"val_ap", r.val_ap},
       {"learning_rate", r.learning_rate},
       {"improved", r.improved}};
}

void to_json(nlohmann::json& j, const TrainingLog& log) {
  j = {{"epochs", log.epochs},
       {"best_epoch", log.best_epoch},
       {"best_val_ap", log.best_val_ap},
       {"lr_decays", log.lr_decays},
       {"stop_reason", log.stop_reason}};
}

Adam::Adam(std::span<const std::span<double>> params, const TrainConfig& cfg)
    : beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads,
                double learning_rate) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step parameter layout changed");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double g = grads[p][i] + weight_decay_ * params[p][i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      params[p][i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace moldkit
