#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "moldkit/tensor.hpp"

namespace moldkit {

// RGB image, planar channel-major (c, y, x), values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), data(3 * w * h, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

// PNG or JPEG, detected from the leading magic bytes. Grayscale and alpha
// inputs are converted to RGB. Throws DataError naming the format on failure.
Image decode_image(std::string_view bytes);
Image load_image(const std::string& path);

// 8-bit RGB encoders; values are rounded and clamped to [0, 255].
std::string encode_png(const Image& image);
// Baseline JPEG with 4:2:0 chroma subsampling.
std::string encode_jpeg(const Image& image, int quality);

// Linked codec library versions, e.g. "libjpeg-turbo 2.1.2, libpng 1.6.37".
std::string codec_versions();

// Bilinear resampling with half-pixel centers and edge clamping. Returns the
// input unchanged when the size already matches.
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);
Image center_crop(const Image& image, std::size_t size);

struct PreprocessConfig {
  std::size_t size = 224;
  std::array<double, 3> mean{0.48145466, 0.4578275, 0.40821073};
  std::array<double, 3> std{0.26862954, 0.26130258, 0.27577711};
};

// Resize the shorter side to cfg.size, center crop, normalize per channel.
// Result is [3, size, size].
TensorF to_pixels(const Image& image, const PreprocessConfig& cfg = {});
TensorF preprocess(std::string_view image_bytes, const PreprocessConfig& cfg = {});

}  // namespace moldkit
