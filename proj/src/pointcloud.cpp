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

#include "edgeval/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "edgeval/error.hpp"

namespace edgeval::pointcloud {

namespace {

void check_stride(int stride) {
  if (stride < 1) throw Error(ErrorCode::PreconditionViolation, "stride must be >= 1");
}

}  // namespace

ColoredPointSet unproject(const DepthMap& depth, const RgbImage& rgb, const CameraIntrinsics& k,
                          const Pose& cam_pose, int stride) {
  check_stride(stride);
  if (rgb.width < 1 || rgb.height < 1) throw Error(ErrorCode::DimensionMismatch, "empty RGB image");
  const auto kd = k.scaled_to({depth.width, depth.height});
  ColoredPointSet out;
  for (int v = 0; v < depth.height; v += stride) {
    const int rv = std::min(rgb.height - 1, static_cast<int>((v + 0.5) * rgb.height / depth.height));
    for (int u = 0; u < depth.width; u += stride) {
      const auto mm = depth.at(u, v);
      if (mm == 0) continue;
      const int ru = std::min(rgb.width - 1, static_cast<int>((u + 0.5) * rgb.width / depth.width));
      out.push(cam_pose.transform_point(unproject_pixel(u, v, to_meters(mm), kd)), rgb.pixel(ru, rv));
    }
  }
  if (out.empty()) throw Error(ErrorCode::NoValidPixels, "depth map has no valid pixels on the stride grid");
  return out;
}

ColoredPointSet virtual_to_points(const render::RenderLayer& layer, const CameraIntrinsics& k,
                                  const Pose& cam_pose, int stride) {
  check_stride(stride);
  const auto kl = k.scaled_to({layer.width(), layer.height()});
  ColoredPointSet out;
  for (int v = 0; v < layer.height(); v += stride)
    for (int u = 0; u < layer.width(); u += stride) {
      if (!layer.covered(u, v)) continue;
      out.push(cam_pose.transform_point(unproject_pixel(u, v, layer.depth(u, v), kl)), layer.color.pixel(u, v));
    }
  return out;
}

ColoredPointSet merge(const ColoredPointSet& real, const ColoredPointSet& virt) {
  ColoredPointSet out = real;
  out.xyz.insert(out.xyz.end(), virt.xyz.begin(), virt.xyz.end());
  out.rgb.insert(out.rgb.end(), virt.rgb.begin(), virt.rgb.end());
  return out;
}

Bytes encode_pcd(const ColoredPointSet& points) {
  static_assert(std::endian::native == std::endian::little, "PCD binary writer assumes little-endian host");
  const auto n = std::to_string(points.size());
  const std::string header =
      "VERSION 0.7\n"
      "FIELDS x y z rgb\n"
      "SIZE 4 4 4 4\n"
      "TYPE F F F F\n"
      "COUNT 1 1 1 1\n"
      "WIDTH " + n + "\n"
      "HEIGHT 1\n"
      "VIEWPOINT 0 0 0 1 0 0 0\n"
      "POINTS " + n + "\n"
      "DATA binary\n";
  Bytes out(header.begin(), header.end());
  out.resize(header.size() + points.size() * 16);
  auto* dst = out.data() + header.size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& c = points.rgb[i];
    const std::uint32_t packed = static_cast<std::uint32_t>(c[0]) << 16 | static_cast<std::uint32_t>(c[1]) << 8 | c[2];
    std::memcpy(dst, points.xyz[i].data(), 12);
    std::memcpy(dst + 12, &packed, 4);
    dst += 16;
  }
  return out;
}

ColoredPointSet parse_pcd(std::span<const std::uint8_t> data) {
  std::size_t pos = 0;
  std::size_t points = 0;
  bool saw_data = false;
  while (!saw_data) {
    const auto begin = pos;
    while (pos < data.size() && data[pos] != '\n') ++pos;
    if (pos >= data.size()) throw Error(ErrorCode::CorruptFrame, "pcd: header not terminated");
    const std::string line(data.begin() + begin, data.begin() + pos);
    ++pos;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "FIELDS") {
      if (line != "FIELDS x y z rgb") throw Error(ErrorCode::CorruptFrame, "pcd: unsupported fields");
    } else if (key == "POINTS") {
      ls >> points;
    } else if (key == "DATA") {
      std::string kind;
      ls >> kind;
      if (kind != "binary") throw Error(ErrorCode::CorruptFrame, "pcd: only DATA binary is supported");
      saw_data = true;
    }
  }
  if (data.size() - pos != points * 16) throw Error(ErrorCode::CorruptFrame, "pcd: payload size mismatch");
  ColoredPointSet out;
  out.xyz.resize(points);
  out.rgb.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    const auto* src = data.data() + pos + i * 16;
    std::memcpy(out.xyz[i].data(), src, 12);
    std::uint32_t packed = 0;
    std::memcpy(&packed, src + 12, 4);
    out.rgb[i] = {static_cast<std::uint8_t>(packed >> 16), static_cast<std::uint8_t>(packed >> 8),
                  static_cast<std::uint8_t>(packed)};
  }
  return out;
}

std::size_t merge_and_write_pcd(const ColoredPointSet& real, const ColoredPointSet& virt, const std::string& path) {
  const auto bytes = encode_pcd(merge(real, virt));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::StorageUnavailable, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::StorageUnavailable, "short write to " + path);
  return bytes.size();
}

}  // namespace edgeval::pointcloud
