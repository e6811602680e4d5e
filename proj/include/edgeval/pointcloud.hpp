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

#include <array>
#include <span>
#include <string>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/render.hpp"

namespace edgeval::pointcloud {

struct ColoredPointSet {
  std::vector<std::array<float, 3>> xyz;  // world meters
  std::vector<std::array<std::uint8_t, 3>> rgb;

  std::size_t size() const { return xyz.size(); }
  bool empty() const { return xyz.empty(); }
  void push(const Vec3& p, const std::uint8_t* color) {
    xyz.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)});
    rgb.push_back({color[0], color[1], color[2]});
  }
};

inline constexpr int kDefaultStride = 2;

/// Camera-space point for pixel (u, v) at depth d meters (-Z forward, Y up).
inline Vec3 unproject_pixel(double u, double v, double d, const CameraIntrinsics& k) {
  return {(u - k.cx) * d / k.fx, -(v - k.cy) * d / k.fy, -d};
}

/// Valid depth pixels on the stride grid, lifted to world space through
/// `cam_pose`. `k` is rescaled to the depth grid; RGB is sampled nearest.
ColoredPointSet unproject(const DepthMap& depth, const RgbImage& rgb, const CameraIntrinsics& k,
                          const Pose& cam_pose, int stride = kDefaultStride);

/// Covered layer pixels, using the layer z-buffer as depth.
ColoredPointSet virtual_to_points(const render::RenderLayer& layer, const CameraIntrinsics& k,
                                  const Pose& cam_pose, int stride = kDefaultStride);

ColoredPointSet merge(const ColoredPointSet& real, const ColoredPointSet& virt);

/// PCD v0.7, DATA binary, FIELDS x y z rgb (rgb = float32 carrying 0x00RRGGBB).
Bytes encode_pcd(const ColoredPointSet& points);
ColoredPointSet parse_pcd(std::span<const std::uint8_t> data);

/// Writes merge(real, virt) as PCD; returns the file size in bytes.
std::size_t merge_and_write_pcd(const ColoredPointSet& real, const ColoredPointSet& virt, const std::string& path);

}  // namespace edgeval::pointcloud
