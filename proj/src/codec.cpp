// Copyright 2026 The edgeval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "edgeval/codec.hpp"

#include <png.h>
#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "edgeval/error.hpp"

namespace edgeval {

namespace {

struct PngReadCursor {
  std::span<const std::uint8_t> data;
  std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + len > cur->data.size()) png_error(png, "read past end of buffer");
  std::memcpy(out, cur->data.data() + cur->offset, len);
  cur->offset += len;
}

void png_write_to_vector(png_structp png, png_bytep in, png_size_t len) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + len);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_throw(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::EncodingFailure, std::string("png: ") + msg);
}

void png_warn_silent(png_structp, png_const_charp) {}

}  // namespace

Bytes encode_png(const RgbImage& img, PngSpeed speed) {
  if (img.width < 1 || img.height < 1 || (img.channels != 3 && img.channels != 4) ||
      img.values.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
    throw Error(ErrorCode::EncodingFailure, "png: invalid image geometry");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
  png_infop info = png_create_info_struct(png);
  Bytes out;
  try {
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (speed == PngSpeed::fast) {
      png_set_compression_level(png, 1);
      png_set_filter(png, 0, PNG_FILTER_SUB);
    }
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y)
      png_write_row(png, const_cast<png_bytep>(img.values.data() + y * stride));
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

RgbImage decode_png(std::span<const std::uint8_t> data) {
  if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0)
    throw Error(ErrorCode::EncodingFailure, "png: bad signature");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw, png_warn_silent);
  png_infop info = png_create_info_struct(png);
  PngReadCursor cursor{data, 0};
  RgbImage img;
  try {
    png_set_read_fn(png, &cursor, png_read_from_span);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
      if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    if (img.channels != 3 && img.channels != 4)
      throw Error(ErrorCode::EncodingFailure, "png: unsupported channel layout");
    img.values.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = img.values.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Bytes encode_depth_raw(const DepthMap& depth) {
  Bytes out(depth.values.size() * 2);
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    out[2 * i] = static_cast<std::uint8_t>(depth.values[i] & 0xFF);
    out[2 * i + 1] = static_cast<std::uint8_t>(depth.values[i] >> 8);
  }
  return out;
}

DepthMap decode_depth_raw(std::span<const std::uint8_t> raw, int width, int height) {
  if (width < 1 || height < 1 || raw.size() != static_cast<std::size_t>(width) * height * 2)
    throw Error(ErrorCode::SchemaMismatch,
                "depth buffer is " + std::to_string(raw.size()) + " bytes, expected " +
                    std::to_string(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) * 2));
  DepthMap d(width, height);
  for (std::size_t i = 0; i < d.values.size(); ++i)
    d.values[i] = static_cast<std::uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
  return d;
}

std::string base64_encode(std::span<const std::uint8_t> data) {
  if (data.empty()) throw Error(ErrorCode::PreconditionViolation, "base64: input must be nonempty");
  const std::size_t len = sodium_base64_ENCODED_LEN(data.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(len, '\0');
  sodium_bin2base64(out.data(), len, data.data(), data.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(len - 1);  // drop terminator
  return out;
}

Bytes base64_decode(std::string_view text) {
  Bytes out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    throw Error(ErrorCode::SchemaMismatch, "invalid base64");
  out.resize(len);
  return out;
}

Bytes encode_pfm_rgb(int width, int height, std::span<const float> rgb) {
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes little-endian host");
  std::string header = "PF\n" + std::to_string(width) + " " + std::to_string(height) + "\n-1.0\n";
  Bytes out(header.begin(), header.end());
  const std::size_t row = static_cast<std::size_t>(width) * 3;
  out.reserve(out.size() + rgb.size() * sizeof(float));
  for (int y = height - 1; y >= 0; --y) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(rgb.data() + y * row);
    out.insert(out.end(), p, p + row * sizeof(float));
  }
  return out;
}

Bytes encode_pfm(const EnvironmentMap& map) { return encode_pfm_rgb(map.width, map.height, map.values); }

EnvironmentMap decode_pfm(std::span<const std::uint8_t> pfm) {
  // Three whitespace-terminated header lines, then raw floats.
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto begin = pos;
    while (pos < pfm.size() && pfm[pos] != '\n') ++pos;
    if (pos >= pfm.size()) throw Error(ErrorCode::CorruptFrame, "pfm: truncated header");
    std::string line(pfm.begin() + begin, pfm.begin() + pos);
    ++pos;
    return line;
  };
  if (next_line() != "PF") throw Error(ErrorCode::CorruptFrame, "pfm: only 3-channel PF supported");
  int width = 0, height = 0;
  double scale = 0.0;
  {
    std::istringstream dims(next_line());
    if (!(dims >> width >> height) || width < 1 || height < 1)
      throw Error(ErrorCode::CorruptFrame, "pfm: bad dimensions");
    std::istringstream sc(next_line());
    if (!(sc >> scale) || scale >= 0.0)
      throw Error(ErrorCode::CorruptFrame, "pfm: only little-endian (negative scale) supported");
  }
  const std::size_t row = static_cast<std::size_t>(width) * 3;
  if (pfm.size() - pos != row * height * sizeof(float))
    throw Error(ErrorCode::CorruptFrame, "pfm: payload size mismatch");
  EnvironmentMap map;
  map.width = width;
  map.height = height;
  map.values.resize(row * height);
  for (int y = height - 1, src = 0; y >= 0; --y, ++src)
    std::memcpy(map.values.data() + y * row, pfm.data() + pos + src * row * sizeof(float),
                row * sizeof(float));
  return map;
}

RgbImage tonemap(int width, int height, std::span<const float> rgb) {
  RgbImage img(width, height, 3);
  for (std::size_t i = 0; i < img.values.size(); ++i) {
    const double v = std::clamp(static_cast<double>(rgb[i]), 0.0, 1.0);
    img.values[i] = static_cast<std::uint8_t>(std::lround(std::pow(v, 1.0 / 2.2) * 255.0));
  }
  return img;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::StorageUnavailable, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

}  // namespace edgeval
