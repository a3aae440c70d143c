#include "moldkit/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace moldkit {

namespace {

LabeledSet generate_split(const SynthSpec& spec, std::uint64_t stream, const char* split) {
  std::seed_seq seq{spec.seed, stream};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledSet set;
  const std::size_t n = 2 * spec.n_per_class;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    LayerFeatureSet f;
    f.source_id = std::string(split) + "-" + std::to_string(i);
    f.per_layer_cls = TensorF({spec.layers, spec.dim});
    for (auto& v : f.per_layer_cls.values()) v = static_cast<float>(normal(rng));
    if (label == 1) {
      for (const auto& p : spec.planted) f.per_layer_cls.at(p.layer - 1, 0) += static_cast<float>(p.shift);
    }
    set.push_back(std::move(f), label, "synthetic");
  }
  return set;
}

}  // namespace

SynthData synth_generate(const SynthSpec& spec) {
  if (spec.n_per_class < 2) throw std::invalid_argument("n_per_class must be >= 2");
  if (spec.layers == 0 || spec.dim == 0) throw std::invalid_argument("layers and dim must be positive");
  for (const auto& p : spec.planted) {
    if (p.layer < 1 || p.layer > spec.layers) {
      throw std::invalid_argument("planted layer " + std::to_string(p.layer) + " outside [1, " +
                                  std::to_string(spec.layers) + "]");
    }
    if (!(p.shift >= 0.0)) throw std::invalid_argument("planted shift must be nonnegative");
  }
  return {generate_split(spec, 0, "train"), generate_split(spec, 1, "val"),
          generate_split(spec, 2, "test")};
}

SynthData synth_generate(std::size_t layers, std::size_t dim, std::size_t n_per_class,
                         std::size_t planted_layer, double shift, std::uint64_t seed) {
  SynthSpec spec;
  spec.layers = layers;
  spec.dim = dim;
  spec.n_per_class = n_per_class;
  spec.planted = {{planted_layer, shift}};
  spec.seed = seed;
  return synth_generate(spec);
}

SynthImages synth_images(const SynthImageSpec& spec) {
  if (spec.n_per_class < 1 || spec.size < 2 || spec.pattern_period < 2) {
    throw std::invalid_argument("synth_images needs n_per_class >= 1, size >= 2, period >= 2");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  SynthImages out;
  const double two_pi = 2.0 * std::numbers::pi;
  const double s = static_cast<double>(spec.size);
  for (std::size_t i = 0; i < 2 * spec.n_per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    Image img(spec.size, spec.size);
    for (std::size_t c = 0; c < 3; ++c) {
      // Base color plus two low-frequency waves with random phase.
      const double base = 0.3 + 0.4 * uniform(rng);
      const double a1 = 0.1 * uniform(rng), p1 = two_pi * uniform(rng);
      const double a2 = 0.1 * uniform(rng), p2 = two_pi * uniform(rng);
      for (std::size_t y = 0; y < spec.size; ++y) {
        for (std::size_t x = 0; x < spec.size; ++x) {
          double v = base + a1 * std::sin(two_pi * static_cast<double>(x) / s + p1) +
                     a2 * std::cos(two_pi * static_cast<double>(y) / s + p2);
          img.at(c, y, x) = static_cast<float>(v);
        }
      }
    }
    if (label == 1) {
      const double period = static_cast<double>(spec.pattern_period);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < spec.size; ++y) {
          for (std::size_t x = 0; x < spec.size; ++x) {
            const double g = std::cos(two_pi * static_cast<double>(x) / period) *
                             std::cos(two_pi * static_cast<double>(y) / period);
            img.at(c, y, x) += static_cast<float>(spec.amplitude * g);
          }
        }
      }
    }
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace moldkit
