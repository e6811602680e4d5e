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

#include "edgeval/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "edgeval/error.hpp"
#include "edgeval/raster.hpp"

namespace edgeval::render {

namespace fs = std::filesystem;

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

// Scratch buffers for the free-function renderer.
thread_local std::vector<Vec3> t_cam_cache;
thread_local std::vector<Vec3> t_world_cache;

}  // namespace

RenderLayer::RenderLayer(int width, int height)
    : color(width, height, 4, 0), zbuffer(static_cast<std::size_t>(width) * height, kInf) {}

void RenderLayer::clear() {
  std::fill(color.values.begin(), color.values.end(), 0);
  std::fill(zbuffer.begin(), zbuffer.end(), kInf);
}

std::array<std::uint8_t, 4> shade_lambert(const SurfaceSample& s, const Vec3& light_dir) {
  const double lambert = std::max(kAmbientFloor, s.world_normal.dot(light_dir));
  const auto& c = s.instance->base_color;
  return {to_byte(c[0] * lambert), to_byte(c[1] * lambert), to_byte(c[2] * lambert), 255};
}

void render_objects(const std::vector<MeshInstance>& instances, const Pose& cam, const CameraIntrinsics& k,
                    const Vec3& light_dir, RenderLayer& layer) {
  layer.clear();
  const Vec3 l = light_dir.normalized();
  detail::rasterize_instances(
      instances, cam, k, layer, [&l](const SurfaceSample& s) { return shade_lambert(s, l); }, t_cam_cache,
      t_world_cache);
}

RenderLayer render_objects(const std::vector<MeshInstance>& instances, const Pose& cam, const CameraIntrinsics& k,
                           const Vec3& light_dir) {
  RenderLayer layer(k.width, k.height);
  render_objects(instances, cam, k, light_dir, layer);
  return layer;
}

void render_occlusion_plane(double plane_depth_m, const std::array<std::uint8_t, 3>& color, RenderLayer& layer) {
  if (!(plane_depth_m > 0.0) || !std::isfinite(plane_depth_m))
    throw Error(ErrorCode::NonpositiveDepth, "plane depth must be > 0");
  const float d = static_cast<float>(plane_depth_m);
  std::fill(layer.zbuffer.begin(), layer.zbuffer.end(), d);
  auto& px = layer.color.values;
  for (std::size_t i = 0; i < px.size(); i += 4) {
    px[i] = color[0];
    px[i + 1] = color[1];
    px[i + 2] = color[2];
    px[i + 3] = 255;
  }
}

RenderLayer render_occlusion_plane(Resolution target, double plane_depth_m, const std::array<std::uint8_t, 3>& color) {
  RenderLayer layer(target.width, target.height);
  render_occlusion_plane(plane_depth_m, color, layer);
  return layer;
}

RgbImage composite(const RgbImage& camera_rgb, const RenderLayer& layer, const DepthMap& depth_pred,
                   const SessionManifest& manifest) {
  const auto t = manifest.target_resolution;
  if (camera_rgb.width != t.width || camera_rgb.height != t.height)
    throw Error(ErrorCode::ResolutionMismatch,
                "camera image " + std::to_string(camera_rgb.width) + "x" + std::to_string(camera_rgb.height) +
                    " vs target " + std::to_string(t.width) + "x" + std::to_string(t.height));
  if (layer.width() != t.width || layer.height() != t.height)
    throw Error(ErrorCode::ResolutionMismatch, "render layer does not match target resolution");
  if (depth_pred.width < 1 || depth_pred.height < 1)
    throw Error(ErrorCode::DimensionMismatch, "empty depth map");

  const DepthMap scene = resize_nearest(depth_pred, t.width, t.height);
  RgbImage out = camera_rgb;
  const int ch = out.channels;
  for (int v = 0; v < t.height; ++v)
    for (int u = 0; u < t.width; ++u) {
      if (!layer.covered(u, v)) continue;
      const auto mm = scene.at(u, v);
      const double scene_m = mm == 0 ? std::numeric_limits<double>::infinity() : to_meters(mm);
      if (!(layer.depth(u, v) < scene_m)) continue;
      const auto* src = layer.color.pixel(u, v);
      auto* dst = out.pixel(u, v);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
      if (ch == 4) dst[3] = 255;
    }
  return out;
}

// ---------------------------------------------------------------- Renderer

fs::path resolve_mesh_path(const std::string& mesh_ref, const std::vector<fs::path>& search_dirs) {
  const fs::path p(mesh_ref);
  if (p.is_absolute()) {
    if (fs::exists(p)) return p;
  } else {
    for (const auto& dir : search_dirs)
      if (fs::exists(dir / p)) return dir / p;
    if (fs::exists(p)) return fs::absolute(p);
  }
  throw Error(ErrorCode::ParseError, "mesh '" + mesh_ref + "' not found");
}

Renderer::Renderer(const SessionManifest& manifest, std::vector<fs::path> search_dirs)
    : manifest_(manifest),
      intrinsics_(manifest.intrinsics.scaled_to(manifest.target_resolution)),
      layer_(manifest.target_resolution.width, manifest.target_resolution.height) {
  std::map<fs::path, std::shared_ptr<const TriangleMesh>> loaded;
  for (const auto& obj : manifest.objects) {
    if (obj.is_plane()) continue;
    const auto path = resolve_mesh_path(obj.mesh_ref, search_dirs);
    auto& mesh = loaded[path];
    if (!mesh) mesh = std::make_shared<const TriangleMesh>(load_obj(path.string()));
    meshes_.push_back(mesh);
    object_ids_.push_back(obj.object_id);
    instances_.push_back({mesh.get(), obj.pose, obj.scale, obj.base_color});
  }
  ++stats_.scene_builds;
  ++stats_.buffer_allocations;
}

bool Renderer::set_object_pose(const std::string& object_id, const Pose& pose, double scale) {
  for (std::size_t i = 0; i < instances_.size(); ++i)
    if (object_ids_[i] == object_id) {
      instances_[i].pose = pose;
      instances_[i].scale = scale;
      return true;
    }
  return false;
}

const RenderLayer& Renderer::render_objects(const Pose& cam, const Vec3& light_dir) {
  const auto cap_before = t_cam_cache.capacity() + t_world_cache.capacity();
  render::render_objects(instances_, cam, intrinsics_, light_dir, layer_);
  if (t_cam_cache.capacity() + t_world_cache.capacity() != cap_before) ++stats_.buffer_allocations;
  ++stats_.frames_rendered;
  return layer_;
}

const RenderLayer& Renderer::render_plane(double plane_depth_m, const std::array<std::uint8_t, 3>& color) {
  render_occlusion_plane(plane_depth_m, color, layer_);
  ++stats_.frames_rendered;
  return layer_;
}

std::optional<double> Renderer::manifest_plane_depth() const {
  for (const auto& obj : manifest_.objects)
    if (obj.is_plane()) {
      const double d = -obj.pose.translation_part().z;
      if (d > 0.0) return d;
    }
  return std::nullopt;
}

}  // namespace edgeval::render
