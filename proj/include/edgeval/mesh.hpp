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
#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "edgeval/core.hpp"

namespace edgeval::render {

struct TriangleMesh {
  struct Face {
    std::array<std::uint32_t, 3> v{};  // into vertices
    std::array<std::uint32_t, 3> n{};  // into normals
  };

  std::vector<Vec3> vertices;  // meters, object space
  std::vector<Vec3> normals;   // unit length
  std::vector<Face> faces;
};

/// OBJ subset: v, vn, f (v, v/vt, v//vn, v/vt/vn; 1-based or negative
/// indices), comments. Polygons are fan-triangulated. Faces without vn get a
/// per-face normal. Other records are skipped with a warning.
TriangleMesh parse_obj(std::istream& in, std::string_view source = "<obj>");
TriangleMesh load_obj(const std::string& path);

/// Procedural meshes, outward-facing CCW winding.
TriangleMesh make_uv_sphere(int stacks, int slices, double radius = 1.0);
TriangleMesh make_box(const Vec3& half_extent);
/// Axis-aligned square in the z = 0 plane facing +Z.
TriangleMesh make_square(double half_size);

}  // namespace edgeval::render
