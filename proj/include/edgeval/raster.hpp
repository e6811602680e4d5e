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

// Scanline-free half-space triangle rasterizer shared by the object renderer
// and the image-based relighting path. Header-only so the shader inlines.

#include <algorithm>
#include <cmath>
#include <vector>

#include "edgeval/render.hpp"

namespace edgeval::render::detail {

struct ClipVertex {
  Vec3 cam;     // camera space
  Vec3 world;   // world position
  Vec3 normal;  // world normal (unnormalized after interpolation)
};

inline ClipVertex lerp(const ClipVertex& a, const ClipVertex& b, double t) {
  return {a.cam + (b.cam - a.cam) * t, a.world + (b.world - a.world) * t, a.normal + (b.normal - a.normal) * t};
}

/// Sutherland-Hodgman against z <= -near. Output has 0, 3 or 4 vertices.
inline int clip_near(const ClipVertex (&in)[3], ClipVertex (&out)[4]) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const auto& a = in[i];
    const auto& b = in[(i + 1) % 3];
    const double da = -a.cam.z - kNearPlane;
    const double db = -b.cam.z - kNearPlane;
    if (da >= 0) out[n++] = a;
    if ((da >= 0) != (db >= 0)) out[n++] = lerp(a, b, da / (da - db));
  }
  return n;
}

struct ScreenVertex {
  double x, y, inv_w;  // inv_w = 1 / camera depth
  ClipVertex v;
};

inline bool is_top_left(const ScreenVertex& a, const ScreenVertex& b) {
  // Interior has positive edge function; see rasterize_triangle.
  return (a.y == b.y && b.x > a.x) || b.y < a.y;
}

/// `shade(const SurfaceSample&) -> std::array<uint8_t, 4>`
template <typename Shader>
void rasterize_triangle(ScreenVertex p0, ScreenVertex p1, ScreenVertex p2, const MeshInstance& inst,
                        RenderLayer& layer, Shader& shade) {
  double area = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x);
  if (area == 0.0 || !std::isfinite(area)) return;
  if (area < 0) {
    std::swap(p1, p2);
    area = -area;
  }
  const int w = layer.width(), h = layer.height();
  const int x_min = std::max(0, static_cast<int>(std::ceil(std::min({p0.x, p1.x, p2.x}))));
  const int x_max = std::min(w - 1, static_cast<int>(std::floor(std::max({p0.x, p1.x, p2.x}))));
  const int y_min = std::max(0, static_cast<int>(std::ceil(std::min({p0.y, p1.y, p2.y}))));
  const int y_max = std::min(h - 1, static_cast<int>(std::floor(std::max({p0.y, p1.y, p2.y}))));
  if (x_min > x_max || y_min > y_max) return;

  const bool tl0 = is_top_left(p1, p2), tl1 = is_top_left(p2, p0), tl2 = is_top_left(p0, p1);
  const double inv_area = 1.0 / area;

  auto edge = [](const ScreenVertex& a, const ScreenVertex& b, double x, double y) {
    return (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
  };

  for (int y = y_min; y <= y_max; ++y) {
    for (int x = x_min; x <= x_max; ++x) {
      const double e0 = edge(p1, p2, x, y);
      const double e1 = edge(p2, p0, x, y);
      const double e2 = edge(p0, p1, x, y);
      if (e0 < 0 || e1 < 0 || e2 < 0) continue;
      if ((e0 == 0 && !tl0) || (e1 == 0 && !tl1) || (e2 == 0 && !tl2)) continue;

      const double b0 = e0 * inv_area * p0.inv_w;
      const double b1 = e1 * inv_area * p1.inv_w;
      const double b2 = e2 * inv_area * p2.inv_w;
      const double inv_w = b0 + b1 + b2;
      const float depth = static_cast<float>(1.0 / inv_w);
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!(depth < layer.zbuffer[idx])) continue;

      const double k = 1.0 / inv_w;
      SurfaceSample s;
      s.world_position = (p0.v.world * b0 + p1.v.world * b1 + p2.v.world * b2) * k;
      s.world_normal = ((p0.v.normal * b0 + p1.v.normal * b1 + p2.v.normal * b2) * k).normalized();
      s.instance = &inst;
      const auto rgba = shade(s);
      layer.zbuffer[idx] = depth;
      std::copy(rgba.begin(), rgba.end(), layer.color.values.begin() + idx * 4);
    }
  }
}

/// Renders every instance into an already-cleared layer. `cam_cache` is a
/// reusable scratch buffer for camera-space vertices.
template <typename Shader>
void rasterize_instances(const std::vector<MeshInstance>& instances, const Pose& cam, const CameraIntrinsics& k,
                         RenderLayer& layer, Shader&& shade, std::vector<Vec3>& cam_cache,
                         std::vector<Vec3>& world_cache) {
  const Pose world_to_cam = cam.inverse();
  for (const auto& inst : instances) {
    if (!inst.mesh) continue;
    const auto& mesh = *inst.mesh;
    const Pose model = inst.pose;
    cam_cache.resize(mesh.vertices.size());
    world_cache.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      world_cache[i] = model.transform_point(mesh.vertices[i] * inst.scale);
      cam_cache[i] = world_to_cam.transform_point(world_cache[i]);
    }
    for (const auto& face : mesh.faces) {
      ClipVertex tri[3];
      for (int c = 0; c < 3; ++c)
        tri[c] = {cam_cache[face.v[c]], world_cache[face.v[c]], model.transform_direction(mesh.normals[face.n[c]])};
      // Back faces: geometric normal points away from the camera origin.
      const Vec3 g = (tri[1].cam - tri[0].cam).cross(tri[2].cam - tri[0].cam);
      if (g.dot(-tri[0].cam) <= 0.0) continue;

      ClipVertex poly[4];
      const int n = clip_near(tri, poly);
      if (n < 3) continue;
      ScreenVertex sv[4];
      for (int i = 0; i < n; ++i) {
        const auto uv = project(poly[i].cam, k);
        sv[i] = {uv[0], uv[1], 1.0 / -poly[i].cam.z, poly[i]};
      }
      for (int i = 1; i + 1 < n; ++i) rasterize_triangle(sv[0], sv[i], sv[i + 1], inst, layer, shade);
    }
  }
}

}  // namespace edgeval::render::detail
