#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moldkit/image.hpp"

namespace moldkit {

enum class PerturbationKind { none, gaussian_blur, jpeg, rescale, cutmix, jigsaw };

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::none;
  double sigma = 0.0;         // gaussian_blur, pixels
  int quality = 100;          // jpeg, 1..100
  double scale = 1.0;         // rescale ratio
  double box_fraction = 0.0;  // cutmix area fraction in [0, 1]
  std::size_t grid = 1;       // jigsaw n×n
  std::uint64_t seed = 0;     // cutmix box placement / jigsaw permutation

  void validate() const;

  static PerturbationSpec blur(double sigma);
  static PerturbationSpec jpeg_quality(int quality);
  static PerturbationSpec rescaled(double scale);
  static PerturbationSpec cutmix_box(double fraction, std::uint64_t seed);
  static PerturbationSpec jigsaw_grid(std::size_t grid, std::uint64_t seed);
};

PerturbationKind parse_perturbation_kind(const std::string& name);
std::string perturbation_kind_name(PerturbationKind kind);

// Separable Gaussian, radius ⌈3σ⌉, reflect padding. σ = 0 is the identity.
Image gaussian_blur(const Image& image, double sigma);
// Encode/decode round trip at the given quality.
Image jpeg_roundtrip(const Image& image, int quality);
// Bilinear resize to ⌊s·w⌋ × ⌊s·h⌋.
Image rescale(const Image& image, double scale);

// Pastes a box covering `fraction` of the area from `partner` at a seeded
// position. Both images must share size and label.
Image cutmix(const Image& image, int label, const Image& partner, int partner_label,
             double fraction, std::uint64_t seed);

// Tile permutation for an n×n jigsaw: perm[dst] = src.
std::vector<std::size_t> jigsaw_permutation(std::size_t grid, std::uint64_t seed);
std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm);
// Moves tile perm[k] to slot k. Pixels past the last full tile stay put.
Image jigsaw(const Image& image, std::size_t grid, const std::vector<std::size_t>& perm);
Image jigsaw(const Image& image, std::size_t grid, std::uint64_t seed);

// Applies a single-image perturbation. cutmix needs a partner and is rejected.
Image perturb(const Image& image, const PerturbationSpec& spec);

}  // namespace moldkit
