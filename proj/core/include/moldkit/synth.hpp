#pragma once

#include <cstdint>
#include <vector>

#include "moldkit/dataset.hpp"
#include "moldkit/image.hpp"

namespace moldkit {

struct PlantedSignal {
  std::size_t layer = 1;  // 1-based
  double shift = 4.0;     // added to coordinate 0 of fake samples
};

struct SynthSpec {
  std::size_t layers = 4;
  std::size_t dim = 16;
  std::size_t n_per_class = 500;  // per split
  std::vector<PlantedSignal> planted{{2, 4.0}};
  std::uint64_t seed = 0;
};

struct SynthData {
  LabeledSet train, val, test;
};

// Per-layer features drawn i.i.d. N(0, 1) independent of the label, except that
// fake samples on each planted layer are shifted by +shift along coordinate 0.
// Every split holds exactly n_per_class real and fake samples, alternating
// real/fake. Deterministic in the seed; splits draw from independent streams.
SynthData synth_generate(const SynthSpec& spec);
SynthData synth_generate(std::size_t layers, std::size_t dim, std::size_t n_per_class,
                         std::size_t planted_layer, double shift, std::uint64_t seed);

struct SynthImageSpec {
  std::size_t n_per_class = 64;
  std::size_t size = 32;
  std::size_t pattern_period = 8;  // pixels per cycle of the fake-only grating
  double amplitude = 0.15;
  std::uint64_t seed = 0;
};

struct SynthImages {
  std::vector<Image> images;
  std::vector<int> labels;
};

// Smooth random real images; fake images add a fixed-frequency grating, a
// location-invariant high-frequency trace that blurring attenuates. With the
// default period every 8-pixel patch (toy-32) sees the grating in phase.
SynthImages synth_images(const SynthImageSpec& spec);

}  // namespace moldkit
