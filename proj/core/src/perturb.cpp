#include "moldkit/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "moldkit/error.hpp"

namespace moldkit {

void PerturbationSpec::validate() const {
  switch (kind) {
    case PerturbationKind::gaussian_blur:
      if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("blur sigma must be >= 0");
      break;
    case PerturbationKind::jpeg:
      if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must lie in [1, 100]");
      break;
    case PerturbationKind::rescale:
      if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("rescale ratio must be > 0");
      break;
    case PerturbationKind::cutmix:
      if (!(box_fraction >= 0.0 && box_fraction <= 1.0)) {
        throw std::invalid_argument("cutmix box fraction must lie in [0, 1]");
      }
      break;
    case PerturbationKind::jigsaw:
      if (grid < 1) throw std::invalid_argument("jigsaw grid must be >= 1");
      break;
    case PerturbationKind::none:
      break;
  }
}

PerturbationSpec PerturbationSpec::blur(double sigma) {
  PerturbationSpec s;
  s.kind = PerturbationKind::gaussian_blur;
  s.sigma = sigma;
  return s;
}

PerturbationSpec PerturbationSpec::jpeg_quality(int quality) {
  PerturbationSpec s;
  s.kind = PerturbationKind::jpeg;
  s.quality = quality;
  return s;
}

PerturbationSpec PerturbationSpec::rescaled(double scale) {
  PerturbationSpec s;
  s.kind = PerturbationKind::rescale;
  s.scale = scale;
  return s;
}

PerturbationSpec PerturbationSpec::cutmix_box(double fraction, std::uint64_t seed) {
  PerturbationSpec s;
  s.kind = PerturbationKind::cutmix;
  s.box_fraction = fraction;
  s.seed = seed;
  return s;
}

PerturbationSpec PerturbationSpec::jigsaw_grid(std::size_t grid, std::uint64_t seed) {
  PerturbationSpec s;
  s.kind = PerturbationKind::jigsaw;
  s.grid = grid;
  s.seed = seed;
  return s;
}

PerturbationKind parse_perturbation_kind(const std::string& name) {
  if (name == "none") return PerturbationKind::none;
  if (name == "blur" || name == "gaussian_blur") return PerturbationKind::gaussian_blur;
  if (name == "jpeg") return PerturbationKind::jpeg;
  if (name == "scale" || name == "rescale") return PerturbationKind::rescale;
  if (name == "cutmix") return PerturbationKind::cutmix;
  if (name == "jigsaw") return PerturbationKind::jigsaw;
  throw std::invalid_argument("unknown perturbation kind '" + name + "'");
}

std::string perturbation_kind_name(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::none: return "none";
    case PerturbationKind::gaussian_blur: return "blur";
    case PerturbationKind::jpeg: return "jpeg";
    case PerturbationKind::rescale: return "rescale";
    case PerturbationKind::cutmix: return "cutmix";
    case PerturbationKind::jigsaw: return "jigsaw";
  }
  return "unknown";
}

namespace {

// Mirror index without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t reflect(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - m);
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("blur sigma must be >= 0");
  if (sigma == 0.0) return image;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    total += kernel[k + radius];
  }
  for (auto& v : kernel) v /= total;

  const long w = static_cast<long>(image.width), h = static_cast<long>(image.height);
  Image tmp(image.width, image.height), out(image.width, image.height);
  for (std::size_t c = 0; c < 3; ++c) {
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) acc += kernel[k + radius] * image.at(c, y, reflect(x + k, w));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    }
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(c, reflect(y + k, h), x);
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Image jpeg_roundtrip(const Image& image, int quality) {
  return decode_image(encode_jpeg(image, quality));
}

Image rescale(const Image& image, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("rescale ratio must be > 0");
  const auto w = static_cast<std::size_t>(std::floor(scale * static_cast<double>(image.width)));
  const auto h = static_cast<std::size_t>(std::floor(scale * static_cast<double>(image.height)));
  if (w == 0 || h == 0) throw std::invalid_argument("rescale ratio collapses the image to zero size");
  return resize_bilinear(image, w, h);
}

Image cutmix(const Image& image, int label, const Image& partner, int partner_label,
             double fraction, std::uint64_t seed) {
  if (label != partner_label) {
    throw std::invalid_argument("cutmix partner label " + std::to_string(partner_label) +
                                " does not match image label " + std::to_string(label));
  }
  if (image.width != partner.width || image.height != partner.height) {
    throw DimensionError("cutmix partner must have the same size as the image");
  }
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("cutmix box fraction must lie in [0, 1]");
  }
  const double side = std::sqrt(fraction);
  const auto bw = static_cast<std::size_t>(std::lround(side * static_cast<double>(image.width)));
  const auto bh = static_cast<std::size_t>(std::lround(side * static_cast<double>(image.height)));
  Image out = image;
  if (bw == 0 || bh == 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> ux(0, image.width - bw), uy(0, image.height - bh);
  const std::size_t x0 = ux(rng), y0 = uy(rng);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = y0; y < y0 + bh; ++y) {
      for (std::size_t x = x0; x < x0 + bw; ++x) out.at(c, y, x) = partner.at(c, y, x);
    }
  }
  return out;
}

std::vector<std::size_t> jigsaw_permutation(std::size_t grid, std::uint64_t seed) {
  if (grid < 1) throw std::invalid_argument("jigsaw grid must be >= 1");
  std::vector<std::size_t> perm(grid * grid);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv.at(perm[i]) = i;
  return inv;
}

Image jigsaw(const Image& image, std::size_t grid, const std::vector<std::size_t>& perm) {
  if (grid < 1) throw std::invalid_argument("jigsaw grid must be >= 1");
  if (perm.size() != grid * grid) throw std::invalid_argument("jigsaw permutation has the wrong size");
  const std::size_t tw = image.width / grid, th = image.height / grid;
  if (tw == 0 || th == 0) throw std::invalid_argument("jigsaw grid finer than the image");
  Image out = image;
  for (std::size_t dst = 0; dst < perm.size(); ++dst) {
    const std::size_t src = perm[dst];
    const std::size_t sy = (src / grid) * th, sx = (src % grid) * tw;
    const std::size_t dy = (dst / grid) * th, dx = (dst % grid) * tw;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < th; ++y) {
        for (std::size_t x = 0; x < tw; ++x) out.at(c, dy + y, dx + x) = image.at(c, sy + y, sx + x);
      }
    }
  }
  return out;
}

Image jigsaw(const Image& image, std::size_t grid, std::uint64_t seed) {
  return jigsaw(image, grid, jigsaw_permutation(grid, seed));
}

Image perturb(const Image& image, const PerturbationSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case PerturbationKind::none: return image;
    case PerturbationKind::gaussian_blur: return gaussian_blur(image, spec.sigma);
    case PerturbationKind::jpeg: return jpeg_roundtrip(image, spec.quality);
    case PerturbationKind::rescale: return rescale(image, spec.scale);
    case PerturbationKind::jigsaw: return jigsaw(image, spec.grid, spec.seed);
    case PerturbationKind::cutmix:
      throw std::invalid_argument("cutmix needs a partner image; call cutmix() directly");
  }
  return image;
}

}  // namespace moldkit
