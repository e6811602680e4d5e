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
#include <string>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/render.hpp"

namespace edgeval::lighting {

using Rgb = std::array<double, 3>;

enum class MaterialKind { diffuse, matte, mirror };

std::string to_string(MaterialKind k);

struct ProbeMaterial {
  MaterialKind kind = MaterialKind::diffuse;
  Rgb albedo{1.0, 1.0, 1.0};     // diffuse and matte
  double phong_exponent = 32.0;  // matte only

  static ProbeMaterial diffuse(Rgb albedo = {1, 1, 1}) { return {MaterialKind::diffuse, albedo, 32.0}; }
  static ProbeMaterial matte(double exponent = 32.0, Rgb albedo = {1, 1, 1}) {
    return {MaterialKind::matte, albedo, exponent};
  }
  static ProbeMaterial mirror() { return {MaterialKind::mirror, {1, 1, 1}, 32.0}; }
};

/// Linear float radiance image of an orthographic unit sphere, R x R.
struct ProbeRender {
  int resolution = 0;
  std::vector<float> image;  // RGB triples
  std::vector<std::uint8_t> mask;

  bool covered(int px, int py) const { return mask[static_cast<std::size_t>(py) * resolution + px] != 0; }
};

/// Equirectangular nearest-texel lookup: theta = acos(y), phi = atan2(x, -z)
/// in [0, 2pi), texel (phi / 2pi * W, theta / pi * H).
Rgb sample_env(const EnvironmentMap& map, const Vec3& dir);

/// Mirror direction of `v` about `n`: 2 (n.v) n - v.
inline Vec3 reflect(const Vec3& v, const Vec3& n) { return n * (2.0 * n.dot(v)) - v; }

/// Precomputed texel directions and radiance-weighted solid angles, shared
/// by the diffuse and matte integrals.
class EnvIntegrator {
 public:
  explicit EnvIntegrator(const EnvironmentMap& map);

  /// Irradiance E(n) = sum L(w) max(0, n.w) dw.
  Rgb irradiance(const Vec3& n) const;
  /// Normalized clamped Phong lobe around r: sum L(w) max(0, r.w)^a (a+1)/(2pi) dw.
  Rgb glossy(const Vec3& r, double exponent) const;

  Rgb shade(const ProbeMaterial& m, const Vec3& normal, const Vec3& view) const;

 private:
  const EnvironmentMap& map_;
  std::vector<Vec3> dirs_;
  std::vector<Rgb> weighted_;  // L(w) * dw
};

ProbeRender render_probe(const EnvironmentMap& map, const ProbeMaterial& material, int resolution);

/// Rasterizes a mesh shaded by the probe materials under `map`, with
/// per-pixel interpolated normals and a perspective view vector. Diffuse
/// and matte read from a prefiltered direction table of `filter_height`
/// rows (nearest lookup); mirror samples the map directly. Color is
/// tonemapped to 8 bits; the layer composes like any render-engine layer.
render::RenderLayer relight_object(const render::TriangleMesh& mesh, const Pose& pose, double scale,
                                   const EnvironmentMap& map, const ProbeMaterial& material, const Pose& cam,
                                   const CameraIntrinsics& k, int filter_height = 32);

/// Equirectangular rotation about +Y: out(phi) = in(phi - delta).
EnvironmentMap rotate_azimuth(const EnvironmentMap& map, double delta_degrees);

/// PFM plus clamp^(1/2.2) PNG, written as <base>.pfm and <base>.png.
void write_probe(const ProbeRender& probe, const std::string& base_path);

}  // namespace edgeval::lighting
