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

#include "edgeval/lighting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "edgeval/codec.hpp"
#include "edgeval/error.hpp"
#include "edgeval/raster.hpp"

namespace edgeval::lighting {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 texel_direction(int u, int v, int width, int height) {
  const double theta = (v + 0.5) / height * kPi;
  const double phi = (u + 0.5) / width * 2.0 * kPi;
  return {std::sin(theta) * std::sin(phi), std::cos(theta), -std::sin(theta) * std::cos(phi)};
}

void write_bytes(const std::string& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::StorageUnavailable, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace

std::string to_string(MaterialKind k) {
  switch (k) {
    case MaterialKind::diffuse: return "diffuse";
    case MaterialKind::matte: return "matte";
    case MaterialKind::mirror: return "mirror";
  }
  return "unknown";
}

Rgb sample_env(const EnvironmentMap& map, const Vec3& dir) {
  const double theta = std::acos(std::clamp(dir.y, -1.0, 1.0));
  double phi = std::atan2(dir.x, -dir.z);
  if (phi < 0.0) phi += 2.0 * kPi;
  const int u = std::min(map.width - 1, static_cast<int>(phi / (2.0 * kPi) * map.width));
  const int v = std::min(map.height - 1, static_cast<int>(theta / kPi * map.height));
  const float* t = map.texel(std::max(u, 0), std::max(v, 0));
  return {t[0], t[1], t[2]};
}

EnvIntegrator::EnvIntegrator(const EnvironmentMap& map) : map_(map) {
  const double dphi_dtheta = (2.0 * kPi / map.width) * (kPi / map.height);
  for (int v = 0; v < map.height; ++v) {
    const double dw = dphi_dtheta * std::sin((v + 0.5) / map.height * kPi);
    for (int u = 0; u < map.width; ++u) {
      const float* t = map.texel(u, v);
      if (t[0] == 0.0f && t[1] == 0.0f && t[2] == 0.0f) continue;
      dirs_.push_back(texel_direction(u, v, map.width, map.height));
      weighted_.push_back({t[0] * dw, t[1] * dw, t[2] * dw});
    }
  }
}

Rgb EnvIntegrator::irradiance(const Vec3& n) const {
  Rgb e{0, 0, 0};
  for (std::size_t i = 0; i < dirs_.size(); ++i) {
    const double c = n.dot(dirs_[i]);
    if (c <= 0.0) continue;
    for (int ch = 0; ch < 3; ++ch) e[ch] += weighted_[i][ch] * c;
  }
  return e;
}

Rgb EnvIntegrator::glossy(const Vec3& r, double exponent) const {
  Rgb e{0, 0, 0};
  const double norm = (exponent + 1.0) / (2.0 * kPi);
  for (std::size_t i = 0; i < dirs_.size(); ++i) {
    const double c = r.dot(dirs_[i]);
    if (c <= 0.0) continue;
    const double lobe = std::pow(c, exponent) * norm;
    for (int ch = 0; ch < 3; ++ch) e[ch] += weighted_[i][ch] * lobe;
  }
  return e;
}

Rgb EnvIntegrator::shade(const ProbeMaterial& m, const Vec3& n, const Vec3& view) const {
  switch (m.kind) {
    case MaterialKind::mirror:
      return sample_env(map_, reflect(view, n));
    case MaterialKind::diffuse: {
      const auto e = irradiance(n);
      return {m.albedo[0] / kPi * e[0], m.albedo[1] / kPi * e[1], m.albedo[2] / kPi * e[2]};
    }
    case MaterialKind::matte: {
      const auto g = glossy(reflect(view, n), m.phong_exponent);
      return {m.albedo[0] * g[0], m.albedo[1] * g[1], m.albedo[2] * g[2]};
    }
  }
  return {0, 0, 0};
}

ProbeRender render_probe(const EnvironmentMap& map, const ProbeMaterial& material, int resolution) {
  if (resolution < 8) throw Error(ErrorCode::PreconditionViolation, "probe resolution must be >= 8");
  if (!(material.phong_exponent > 0.0))
    throw Error(ErrorCode::PreconditionViolation, "phong exponent must be > 0");
  if (const auto v = validate_environment_map(map); !v)
    throw Error(ErrorCode::PreconditionViolation, "environment map " + v.message);

  ProbeRender out;
  out.resolution = resolution;
  out.image.assign(static_cast<std::size_t>(resolution) * resolution * 3, 0.0f);
  out.mask.assign(static_cast<std::size_t>(resolution) * resolution, 0);
  const EnvIntegrator integrator(map);
  const Vec3 view{0, 0, 1};
  for (int py = 0; py < resolution; ++py)
    for (int px = 0; px < resolution; ++px) {
      const double x = (px + 0.5) / resolution * 2.0 - 1.0;
      const double y = 1.0 - (py + 0.5) / resolution * 2.0;
      const double r2 = x * x + y * y;
      if (r2 > 1.0) continue;
      const Vec3 n{x, y, std::sqrt(1.0 - r2)};
      const auto c = integrator.shade(material, n, view);
      const std::size_t i = static_cast<std::size_t>(py) * resolution + px;
      out.mask[i] = 1;
      for (int ch = 0; ch < 3; ++ch) out.image[i * 3 + ch] = static_cast<float>(c[ch]);
    }
  return out;
}

render::RenderLayer relight_object(const render::TriangleMesh& mesh, const Pose& pose, double scale,
                                   const EnvironmentMap& map, const ProbeMaterial& material, const Pose& cam,
                                   const CameraIntrinsics& k, int filter_height) {
  if (const auto v = validate_environment_map(map); !v)
    throw Error(ErrorCode::PreconditionViolation, "environment map " + v.message);

  // Prefiltered table: diffuse indexed by normal, matte by reflection vector.
  EnvironmentMap filtered;
  if (material.kind != MaterialKind::mirror) {
    filter_height = std::max(filter_height, 4);
    filtered = EnvironmentMap(2 * filter_height, filter_height);
    const EnvIntegrator integrator(map);
    for (int v = 0; v < filtered.height; ++v)
      for (int u = 0; u < filtered.width; ++u) {
        const Vec3 d = texel_direction(u, v, filtered.width, filtered.height);
        // view = n makes reflect(view, n) = n.
        const auto c = integrator.shade(material, d, d);
        float* t = filtered.texel(u, v);
        for (int ch = 0; ch < 3; ++ch) t[ch] = static_cast<float>(c[ch]);
      }
  }

  const Vec3 eye = cam.translation_part();
  auto shader = [&](const render::SurfaceSample& s) -> std::array<std::uint8_t, 4> {
    const Vec3 view = (eye - s.world_position).normalized();
    Rgb c{};
    switch (material.kind) {
      case MaterialKind::mirror: c = sample_env(map, reflect(view, s.world_normal)); break;
      case MaterialKind::diffuse: c = sample_env(filtered, s.world_normal); break;
      case MaterialKind::matte: c = sample_env(filtered, reflect(view, s.world_normal)); break;
    }
    std::array<std::uint8_t, 4> out{0, 0, 0, 255};
    for (int ch = 0; ch < 3; ++ch)
      out[ch] = static_cast<std::uint8_t>(std::lround(std::pow(std::clamp(c[ch], 0.0, 1.0), 1.0 / 2.2) * 255.0));
    return out;
  };

  render::RenderLayer layer(k.width, k.height);
  const std::vector<render::MeshInstance> instances{{&mesh, pose, scale, {1, 1, 1}}};
  std::vector<Vec3> cam_cache, world_cache;
  render::detail::rasterize_instances(instances, cam, k, layer, shader, cam_cache, world_cache);
  return layer;
}

EnvironmentMap rotate_azimuth(const EnvironmentMap& map, double delta_degrees) {
  const long shift = std::lround(delta_degrees / 360.0 * map.width);
  EnvironmentMap out(map.width, map.height);
  for (int v = 0; v < map.height; ++v)
    for (int u = 0; u < map.width; ++u) {
      long src = (u - shift) % map.width;
      if (src < 0) src += map.width;
      std::copy_n(map.texel(static_cast<int>(src), v), 3, out.texel(u, v));
    }
  return out;
}

void write_probe(const ProbeRender& probe, const std::string& base_path) {
  write_bytes(base_path + ".pfm", encode_pfm_rgb(probe.resolution, probe.resolution, probe.image));
  write_bytes(base_path + ".png", encode_png(tonemap(probe.resolution, probe.resolution, probe.image)));
}

}  // namespace edgeval::lighting
