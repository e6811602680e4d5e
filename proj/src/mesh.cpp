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

#include "edgeval/mesh.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "edgeval/error.hpp"

namespace edgeval::render {

namespace {

[[noreturn]] void parse_fail(std::string_view source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, std::string(source) + ":" + std::to_string(line) + ": " + what);
}

/// Resolves a 1-based or negative OBJ index against `count` elements.
std::uint32_t resolve_index(long idx, std::size_t count, std::string_view source, std::size_t line,
                            const char* kind) {
  long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
  if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(count))
    parse_fail(source, line,
               std::string(kind) + " index " + std::to_string(idx) + " out of range (have " +
                   std::to_string(count) + ")");
  return static_cast<std::uint32_t>(resolved);
}

long parse_long(std::string_view s, std::string_view source, std::size_t line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) parse_fail(source, line, "bad index '" + std::string(s) + "'");
  return v;
}

}  // namespace

TriangleMesh parse_obj(std::istream& in, std::string_view source) {
  TriangleMesh mesh;
  std::string line;
  std::size_t line_no = 0;
  std::size_t skipped = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;

    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z)) parse_fail(source, line_no, "v needs 3 coordinates");
      mesh.vertices.push_back(p);
    } else if (tag == "vn") {
      Vec3 n;
      if (!(ls >> n.x >> n.y >> n.z)) parse_fail(source, line_no, "vn needs 3 components");
      mesh.normals.push_back(n.normalized());
    } else if (tag == "f") {
      std::vector<std::uint32_t> vs;
      std::vector<long> ns;
      std::string corner;
      while (ls >> corner) {
        const auto s1 = corner.find('/');
        const std::string_view cv(corner);
        vs.push_back(resolve_index(parse_long(cv.substr(0, s1), source, line_no), mesh.vertices.size(), source,
                                   line_no, "vertex"));
        long n = -1;
        if (s1 != std::string::npos) {
          const auto s2 = corner.find('/', s1 + 1);
          if (s2 != std::string::npos && s2 + 1 < corner.size())
            n = resolve_index(parse_long(cv.substr(s2 + 1), source, line_no), mesh.normals.size(), source,
                              line_no, "normal");
        }
        ns.push_back(n);
      }
      if (vs.size() < 3) parse_fail(source, line_no, "face needs at least 3 vertices");
      for (std::size_t k = 1; k + 1 < vs.size(); ++k) {
        TriangleMesh::Face face;
        face.v = {vs[0], vs[k], vs[k + 1]};
        const bool has_normals = ns[0] >= 0 && ns[k] >= 0 && ns[k + 1] >= 0;
        if (has_normals) {
          face.n = {static_cast<std::uint32_t>(ns[0]), static_cast<std::uint32_t>(ns[k]),
                    static_cast<std::uint32_t>(ns[k + 1])};
        } else {
          const auto& a = mesh.vertices[face.v[0]];
          const auto& b = mesh.vertices[face.v[1]];
          const auto& c = mesh.vertices[face.v[2]];
          mesh.normals.push_back((b - a).cross(c - a).normalized());
          const auto ni = static_cast<std::uint32_t>(mesh.normals.size() - 1);
          face.n = {ni, ni, ni};
        }
        mesh.faces.push_back(face);
      }
    } else if (tag == "vt" || tag == "o" || tag == "g" || tag == "s" || tag == "usemtl" || tag == "mtllib") {
      ++skipped;
    } else {
      ++skipped;
      spdlog::warn("{}:{}: ignoring unsupported OBJ record '{}'", source, line_no, tag);
    }
  }
  if (mesh.faces.empty()) throw Error(ErrorCode::EmptyMesh, std::string(source) + ": no faces");
  return mesh;
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open");
  return parse_obj(in, path);
}

TriangleMesh make_uv_sphere(int stacks, int slices, double radius) {
  TriangleMesh mesh;
  for (int i = 0; i <= stacks; ++i) {
    const double theta = std::numbers::pi * i / stacks;
    for (int j = 0; j <= slices; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / slices;
      const Vec3 n{std::sin(theta) * std::cos(phi), std::cos(theta), -std::sin(theta) * std::sin(phi)};
      mesh.vertices.push_back(n * radius);
      mesh.normals.push_back(n);
    }
  }
  const auto idx = [slices](int i, int j) { return static_cast<std::uint32_t>(i * (slices + 1) + j); };
  for (int i = 0; i < stacks; ++i)
    for (int j = 0; j < slices; ++j) {
      const auto a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
      if (i != 0) mesh.faces.push_back({{a, b, d}, {a, b, d}});
      if (i != stacks - 1) mesh.faces.push_back({{b, c, d}, {b, c, d}});
    }
  return mesh;
}

TriangleMesh make_box(const Vec3& h) {
  TriangleMesh mesh;
  const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const double ext[3] = {h.x, h.y, h.z};
  for (int axis = 0; axis < 3; ++axis)
    for (int sign : {1, -1}) {
      const Vec3 n = axes[axis] * sign;
      const Vec3 u = axes[(axis + 1) % 3];
      const Vec3 v = axes[(axis + 2) % 3];
      const double eu = ext[(axis + 1) % 3], ev = ext[(axis + 2) % 3];
      const Vec3 c = n * ext[axis];
      const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.push_back(c - u * eu - v * ev);
      mesh.vertices.push_back(c + u * eu - v * ev);
      mesh.vertices.push_back(c + u * eu + v * ev);
      mesh.vertices.push_back(c - u * eu + v * ev);
      mesh.normals.push_back(n);
      const auto ni = static_cast<std::uint32_t>(mesh.normals.size() - 1);
      // u x v = n for the positive side; flip winding on the negative side.
      if (sign > 0) {
        mesh.faces.push_back({{base, base + 1, base + 2}, {ni, ni, ni}});
        mesh.faces.push_back({{base, base + 2, base + 3}, {ni, ni, ni}});
      } else {
        mesh.faces.push_back({{base, base + 2, base + 1}, {ni, ni, ni}});
        mesh.faces.push_back({{base, base + 3, base + 2}, {ni, ni, ni}});
      }
    }
  return mesh;
}

TriangleMesh make_square(double s) {
  TriangleMesh mesh;
  mesh.vertices = {{-s, -s, 0}, {s, -s, 0}, {s, s, 0}, {-s, s, 0}};
  mesh.normals = {{0, 0, 1}};
  mesh.faces = {{{0, 1, 2}, {0, 0, 0}}, {{0, 2, 3}, {0, 0, 0}}};
  return mesh;
}

}  // namespace edgeval::render
