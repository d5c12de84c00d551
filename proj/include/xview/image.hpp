#pragma once

// 8-bit image buffers, PNG encoding through libpng, and the pinned resize
// filters used when observations arrive at a non-native resolution.

#include "xview/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace xview {

struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;  // row-major, interleaved channels

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h * w * c), fill) {}

  std::uint8_t& at(int r, int c, int ch) {
    return data[static_cast<std::size_t>((r * width + c) * channels + ch)];
  }
  std::uint8_t at(int r, int c, int ch) const {
    return data[static_cast<std::size_t>((r * width + c) * channels + ch)];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

namespace detail {

inline void png_append(png_structp png, png_bytep bytes, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), bytes, bytes + len);
}

inline void png_flush_noop(png_structp) {}

struct PngReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_consume(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + len > cur->size) png_error(png, "truncated PNG");
  std::memcpy(out, cur->data + cur->pos, len);
  cur->pos += len;
}

}  // namespace detail

/// Encodes an 8-bit gray (1 channel) or RGB (3 channel) image as PNG bytes.
inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw IoError("encode_png: 1 or 3 channels");
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encode_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encode_png: libpng error");
  }
  png_set_write_fn(png, &out, detail::png_append, detail::png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(img.width * img.channels);
  for (int r = 0; r < img.height; ++r) {
    png_write_row(png, const_cast<png_bytep>(img.data.data() + stride * static_cast<std::size_t>(r)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

/// Decodes PNG bytes into 8-bit gray or RGB (alpha and palettes are
/// flattened to RGB).
inline Image decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("decode_png: not a PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decode_png: libpng init failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decode_png: malformed PNG");
  }
  detail::PngReadCursor cursor{bytes.data(), bytes.size(), 0};
  png_set_read_fn(png, &cursor, detail::png_consume);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = static_cast<int>(png_get_channels(png, info));
  img.data.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
  const std::size_t stride = static_cast<std::size_t>(img.width * img.channels);
  for (int r = 0; r < img.height; ++r) {
    png_read_row(png, img.data.data() + stride * static_cast<std::size_t>(r), nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_png(const std::string& path, const Image& img) { write_file(path, encode_png(img)); }

/// Bilinear resize with half-pixel centres and edge clamping. Resizing to
/// the same dimensions returns the input unchanged.
inline Image resize_bilinear(const Image& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  Image dst(height, width, src.channels);
  const double sy = static_cast<double>(src.height) / height;
  const double sx = static_cast<double>(src.width) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < src.channels; ++ch) {
        const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch)) +
                         wy * ((1 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch));
        dst.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return dst;
}

/// Nearest-neighbour resize of a label grid (used for masks and id buffers).
template <typename Label>
std::vector<Label> resize_nearest(const std::vector<Label>& src, int src_h, int src_w, int height,
                                  int width) {
  if (src_h == height && src_w == width) return src;
  std::vector<Label> dst(static_cast<std::size_t>(height * width));
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(src_h - 1, static_cast<int>((r + 0.5) * src_h / height));
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(src_w - 1, static_cast<int>((c + 0.5) * src_w / width));
      dst[static_cast<std::size_t>(r * width + c)] = src[static_cast<std::size_t>(sr * src_w + sc)];
    }
  }
  return dst;
}

}  // namespace xview
