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
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/mesh.hpp"

namespace edgeval::render {

/// Rendered virtual content at target resolution. zbuffer holds camera
/// depth (meters along -Z), +inf where nothing was drawn.
struct RenderLayer {
  RgbImage color;  // RGBA
  std::vector<float> zbuffer;

  RenderLayer() = default;
  RenderLayer(int width, int height);

  int width() const { return color.width; }
  int height() const { return color.height; }
  void clear();
  bool covered(int u, int v) const { return color.pixel(u, v)[3] > 0; }
  float depth(int u, int v) const { return zbuffer[static_cast<std::size_t>(v) * color.width + u]; }
};

struct MeshInstance {
  const TriangleMesh* mesh = nullptr;
  Pose pose;  // object-to-world
  double scale = 1.0;
  std::array<double, 3> base_color{0.8, 0.8, 0.8};
};

/// Interpolated surface attributes handed to a shader.
struct SurfaceSample {
  Vec3 world_position;
  Vec3 world_normal;  // unit
  const MeshInstance* instance = nullptr;
};

inline constexpr double kNearPlane = 1e-3;  // meters
inline constexpr double kAmbientFloor = 0.1;

/// Projects a camera-space point (z < 0) to pixel coordinates. Pixel centers
/// sit on integer coordinates.
inline std::array<double, 2> project(const Vec3& p, const CameraIntrinsics& k) {
  return {k.fx * (p.x / -p.z) + k.cx, k.cy - k.fy * (p.y / -p.z)};
}

/// Lambertian shading with an ambient floor, the built-in object shader.
std::array<std::uint8_t, 4> shade_lambert(const SurfaceSample& s, const Vec3& light_dir);

/// Z-buffered rasterization of `instances` seen from camera pose `cam`
/// (camera-to-world) into `layer`, which is cleared first.
void render_objects(const std::vector<MeshInstance>& instances, const Pose& cam, const CameraIntrinsics& k,
                    const Vec3& light_dir, RenderLayer& layer);
RenderLayer render_objects(const std::vector<MeshInstance>& instances, const Pose& cam,
                           const CameraIntrinsics& k, const Vec3& light_dir);

/// Fronto-parallel plane covering the whole viewport at camera depth d.
void render_occlusion_plane(double plane_depth_m, const std::array<std::uint8_t, 3>& color, RenderLayer& layer);
RenderLayer render_occlusion_plane(Resolution target, double plane_depth_m,
                                   const std::array<std::uint8_t, 3>& color = {0, 0, 0});

/// Depth-test composite: the layer wins where it is covered and strictly
/// nearer than the (nearest-resized) predicted scene depth. Invalid depth
/// counts as infinitely far.
RgbImage composite(const RgbImage& camera_rgb, const RenderLayer& layer, const DepthMap& depth_pred,
                   const SessionManifest& manifest);

struct RendererStats {
  std::uint64_t scene_builds = 0;       // scene graph constructions
  std::uint64_t buffer_allocations = 0; // per-frame buffers (re)allocated
  std::uint64_t frames_rendered = 0;
};

/// Session-owned renderer. Loads every mesh once at construction; per-frame
/// calls reuse the layer and vertex buffers.
class Renderer {
 public:
  /// Relative mesh_ref paths are tried against each search dir in order.
  Renderer(const SessionManifest& manifest, std::vector<std::filesystem::path> search_dirs = {});

  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  Resolution target() const { return manifest_.target_resolution; }
  const RendererStats& stats() const { return stats_; }

  /// Returns false when no object has that id.
  bool set_object_pose(const std::string& object_id, const Pose& pose, double scale);
  const std::vector<MeshInstance>& instances() const { return instances_; }
  bool has_meshes() const { return !instances_.empty(); }

  const RenderLayer& render_objects(const Pose& cam, const Vec3& light_dir);
  const RenderLayer& render_plane(double plane_depth_m, const std::array<std::uint8_t, 3>& color = {0, 0, 0});

  /// Initial occlusion-plane depth from a "plane" object in the manifest
  /// (distance along the camera axis of its translation), if any.
  std::optional<double> manifest_plane_depth() const;

 private:
  SessionManifest manifest_;
  CameraIntrinsics intrinsics_;
  std::vector<std::shared_ptr<const TriangleMesh>> meshes_;  // owns instances_[i].mesh
  std::vector<std::string> object_ids_;
  std::vector<MeshInstance> instances_;
  RenderLayer layer_;
  RendererStats stats_;
};

std::filesystem::path resolve_mesh_path(const std::string& mesh_ref,
                                        const std::vector<std::filesystem::path>& search_dirs);

}  // namespace edgeval::render
