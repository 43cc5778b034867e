#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuseflow/core.hpp"
#include "fuseflow/grid.hpp"

namespace fuseflow {

// Thin libpng wrapper. Pixels are kept as host-order uint16 samples regardless
// of source bit depth; channels is 1 (gray) or 3 (RGB). The encoder uses fixed
// settings (filter NONE, zlib level 6) so that encoding is deterministic and
// encode(decode(bytes)) returns the input byte-for-byte for files we wrote.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<uint16_t> samples;  // row-major, interleaved channels

  uint16_t& at(int x, int y, int c = 0) {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint16_t at(int x, int y, int c = 0) const {
    return samples[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

namespace detail {

struct PngReadState {
  const uint8_t* data;
  size_t size;
  size_t pos;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->size) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, st->data + st->pos, n);
  st->pos += n;
}

inline void png_mem_write(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

inline void png_mem_flush(png_structp) {}

}  // namespace detail

inline PngImage decode_png(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw std::runtime_error("decode_png: not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("decode_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("decode_png: png_create_info_struct failed");
  }
  detail::PngReadState st{bytes.data(), bytes.size(), 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png: libpng decode error");
  }
  png_set_read_fn(png, &st, detail::png_mem_read);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int depth = png_get_bit_depth(png, info);
  int color = png_get_color_type(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  depth = png_get_bit_depth(png, info);
  color = png_get_color_type(png, info);
  int ch = (color == PNG_COLOR_TYPE_RGB) ? 3 : 1;

  PngImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = ch;
  img.bit_depth = depth;
  img.samples.resize(static_cast<size_t>(w) * h * ch);

  std::vector<uint8_t> row(png_get_rowbytes(png, info));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    uint16_t* dst = img.samples.data() + static_cast<size_t>(y) * w * ch;
    if (depth == 16) {
      for (size_t i = 0; i < static_cast<size_t>(w) * ch; ++i)
        dst[i] = static_cast<uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);  // network order
    } else {
      for (size_t i = 0; i < static_cast<size_t>(w) * ch; ++i) dst[i] = row[i];
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::vector<uint8_t> encode_png(const PngImage& img) {
  if (img.width <= 0 || img.height <= 0)
    throw std::runtime_error("encode_png: empty image");
  if (img.channels != 1 && img.channels != 3)
    throw std::runtime_error("encode_png: channels must be 1 or 3");
  if (img.bit_depth != 8 && img.bit_depth != 16)
    throw std::runtime_error("encode_png: bit depth must be 8 or 16");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("encode_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("encode_png: png_create_info_struct failed");
  }
  std::vector<uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("encode_png: libpng encode error");
  }
  png_set_write_fn(png, &out, detail::png_mem_write, detail::png_mem_flush);

  int color = img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_write_info(png, info);

  size_t row_samples = static_cast<size_t>(img.width) * img.channels;
  std::vector<uint8_t> row(row_samples * (img.bit_depth / 8));
  for (int y = 0; y < img.height; ++y) {
    const uint16_t* src = img.samples.data() + static_cast<size_t>(y) * row_samples;
    if (img.bit_depth == 16) {
      for (size_t i = 0; i < row_samples; ++i) {
        row[2 * i] = static_cast<uint8_t>(src[i] >> 8);
        row[2 * i + 1] = static_cast<uint8_t>(src[i] & 0xFF);
      }
    } else {
      for (size_t i = 0; i < row_samples; ++i) row[i] = static_cast<uint8_t>(src[i] & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline PngImage load_png(const std::string& path) { return decode_png(read_file(path)); }

inline void save_png(const std::string& path, const PngImage& img) {
  write_file(path, encode_png(img));
}

// Any decodable PNG collapses to 8-bit luminance for the pipeline.
inline Image8 to_luminance(const PngImage& img) {
  Image8 out(img.width, img.height);
  int shift = img.bit_depth == 16 ? 8 : 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 3) {
        out.at(x, y) = rec601_luminance(static_cast<uint8_t>(img.at(x, y, 0) >> shift),
                                        static_cast<uint8_t>(img.at(x, y, 1) >> shift),
                                        static_cast<uint8_t>(img.at(x, y, 2) >> shift));
      } else {
        out.at(x, y) = static_cast<uint8_t>(img.at(x, y, 0) >> shift);
      }
    }
  }
  return out;
}

inline Image8 load_luminance(const std::string& path) { return to_luminance(load_png(path)); }

}  // namespace fuseflow
