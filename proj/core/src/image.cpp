#include "moldkit/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

#include "moldkit/container.hpp"
#include "moldkit/error.hpp"

namespace moldkit {

namespace {

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Image from_interleaved(const unsigned char* src, std::size_t w, std::size_t h, std::size_t channels) {
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const unsigned char* px = src + (y * w + x) * channels;
      for (std::size_t c = 0; c < 3; ++c) {
        const unsigned char v = channels >= 3 ? px[c] : px[0];
        img.at(c, y, x) = static_cast<float>(v) / 255.0f;
      }
    }
  }
  return img;
}

std::vector<unsigned char> to_interleaved(const Image& image) {
  std::vector<unsigned char> out(image.width * image.height * 3);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out[(y * image.width + x) * 3 + c] = to_byte(image.at(c, y, x));
    }
  }
  return out;
}

Image decode_png(std::string_view bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw DataError(std::string("undecodable PNG: ") + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DataError("undecodable PNG: " + msg);
  }
  return from_interleaved(buf.data(), img.width, img.height, 3);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::string_view bytes) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<unsigned char> buf;
  std::size_t w = 0, h = 0, channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError(std::string("undecodable JPEG: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = cinfo.output_width;
  h = cinfo.output_height;
  channels = static_cast<std::size_t>(cinfo.output_components);
  buf.resize(w * h * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(buf.data(), w, h, channels);
}

}  // namespace

Image decode_image(std::string_view bytes) {
  static constexpr unsigned char kPng[] = {0x89, 'P', 'N', 'G'};
  static constexpr unsigned char kJpeg[] = {0xFF, 0xD8, 0xFF};
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kPng, 4) == 0) return decode_png(bytes);
  if (bytes.size() >= 3 && std::memcmp(bytes.data(), kJpeg, 3) == 0) return decode_jpeg(bytes);
  throw DataError("undecodable image: unrecognized format (expected PNG or JPEG)");
}

Image load_image(const std::string& path) { return decode_image(read_file_bytes(path)); }

std::string encode_png(const Image& image) {
  if (image.width == 0 || image.height == 0) throw DataError("cannot encode an empty image as PNG");
  const auto pixels = to_interleaved(image);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encoding failed: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encoding failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::string encode_jpeg(const Image& image, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must lie in [1, 100]");
  if (image.width == 0 || image.height == 0) throw DataError("cannot encode an empty image as JPEG");
  for (float v : image.data) {
    if (!std::isfinite(v)) throw DataError("cannot JPEG-encode an image with non-finite values");
  }
  const auto pixels = to_interleaved(image);
  jpeg_compress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw DataError(std::string("JPEG encoding failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.comp_info[0].h_samp_factor = 2;
  cinfo.comp_info[0].v_samp_factor = 2;
  cinfo.comp_info[1].h_samp_factor = cinfo.comp_info[1].v_samp_factor = 1;
  cinfo.comp_info[2].h_samp_factor = cinfo.comp_info[2].v_samp_factor = 1;
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<unsigned char*>(pixels.data() + cinfo.next_scanline * image.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::string out(reinterpret_cast<const char*>(mem), mem_size);
  std::free(mem);
  return out;
}

Image resize_bilinear(const Image& image, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw std::invalid_argument("resize target must be nonzero");
  if (width == image.width && height == image.height) return image;
  Image out(width, height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  auto sample_axis = [](double pos, std::size_t n, std::size_t& i0, std::size_t& i1, double& t) {
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, n - 1);
    t = pos - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double ty;
    sample_axis((static_cast<double>(y) + 0.5) * sy - 0.5, image.height, y0, y1, ty);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double tx;
      sample_axis((static_cast<double>(x) + 0.5) * sx - 0.5, image.width, x0, x1, tx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(c, y0, x0) * (1 - tx) + image.at(c, y0, x1) * tx;
        const double bottom = image.at(c, y1, x0) * (1 - tx) + image.at(c, y1, x1) * tx;
        out.at(c, y, x) = static_cast<float>(top * (1 - ty) + bottom * ty);
      }
    }
  }
  return out;
}

Image center_crop(const Image& image, std::size_t size) {
  if (image.width < size || image.height < size) {
    throw std::invalid_argument("center_crop larger than the image");
  }
  if (image.width == size && image.height == size) return image;
  const std::size_t left = (image.width - size) / 2, top = (image.height - size) / 2;
  Image out(size, size);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) out.at(c, y, x) = image.at(c, top + y, left + x);
    }
  }
  return out;
}

TensorF to_pixels(const Image& image, const PreprocessConfig& cfg) {
  if (image.width == 0 || image.height == 0) throw DataError("cannot preprocess an empty image");
  std::size_t w = cfg.size, h = cfg.size;
  if (image.width < image.height) {
    h = image.height * cfg.size / image.width;
  } else if (image.height < image.width) {
    w = image.width * cfg.size / image.height;
  }
  const Image square = center_crop(resize_bilinear(image, w, h), cfg.size);
  TensorF out({3, cfg.size, cfg.size});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < cfg.size; ++y) {
      for (std::size_t x = 0; x < cfg.size; ++x) {
        out[(c * cfg.size + y) * cfg.size + x] =
            static_cast<float>((square.at(c, y, x) - cfg.mean[c]) / cfg.std[c]);
      }
    }
  }
  return out;
}

TensorF preprocess(std::string_view image_bytes, const PreprocessConfig& cfg) {
  return to_pixels(decode_image(image_bytes), cfg);
}

std::string codec_versions() {
#ifdef LIBJPEG_TURBO_VERSION_NUMBER
  constexpr int v = LIBJPEG_TURBO_VERSION_NUMBER;
  std::string jpeg = "libjpeg-turbo " + std::to_string(v / 1000000) + "." +
                     std::to_string(v / 1000 % 1000) + "." + std::to_string(v % 1000);
#else
  std::string jpeg = "libjpeg " + std::to_string(JPEG_LIB_VERSION);
#endif
  return jpeg + ", libpng " + PNG_LIBPNG_VER_STRING;
}

}  // namespace moldkit
