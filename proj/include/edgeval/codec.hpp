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

#pragma once

#include <span>
#include <string>
#include <string_view>

#include "edgeval/core.hpp"

namespace edgeval {

/// zlib level for PNG output. Composites favor speed; stored captures use the
/// default. Both are lossless.
enum class PngSpeed { fast, balanced };

/// Lossless PNG (8-bit RGB or RGBA, alpha preserved).
Bytes encode_png(const RgbImage& img, PngSpeed speed = PngSpeed::balanced);
RgbImage decode_png(std::span<const std::uint8_t> png);

/// Raw depth: width * height little-endian uint16, row-major.
Bytes encode_depth_raw(const DepthMap& depth);
DepthMap decode_depth_raw(std::span<const std::uint8_t> raw, int width, int height);

/// Standard Base64 with padding.
std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

/// Portable Float Map, little-endian (scale -1.0), rows stored bottom-to-top.
Bytes encode_pfm(const EnvironmentMap& map);
EnvironmentMap decode_pfm(std::span<const std::uint8_t> pfm);
Bytes encode_pfm_rgb(int width, int height, std::span<const float> rgb);

/// 8-bit display image: clamp(linear)^(1/2.2).
RgbImage tonemap(int width, int height, std::span<const float> rgb);

Bytes read_file(const std::string& path);

}  // namespace edgeval
