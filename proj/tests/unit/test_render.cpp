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

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "edgeval/error.hpp"
#include "edgeval/pointcloud.hpp"
#include "edgeval/render.hpp"
#include "support.hpp"

using namespace edgeval;
using namespace edgeval::render;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::PreconditionViolation;
}

TriangleMesh parse(const std::string& text) {
  std::istringstream in(text);
  return parse_obj(in, "test.obj");
}

CameraIntrinsics square_k(int w, int h, double f) { return {f, f, (w - 1) / 2.0, (h - 1) / 2.0, w, h}; }

std::size_t covered_count(const RenderLayer& l) {
  std::size_t n = 0;
  for (int v = 0; v < l.height(); ++v)
    for (int u = 0; u < l.width(); ++u) n += l.covered(u, v);
  return n;
}

}  // namespace

TEST(Obj, SingleTriangle) {
  const auto m = parse("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  EXPECT_EQ(m.vertices.size(), 3u);
  ASSERT_EQ(m.faces.size(), 1u);
  EXPECT_EQ(m.faces[0].v, (std::array<std::uint32_t, 3>{0, 1, 2}));
  const auto& n = m.normals[m.faces[0].n[0]];
  EXPECT_DOUBLE_EQ(n.z, 1.0);
}

TEST(Obj, QuadFanTriangulated) {
  const auto m = parse("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  ASSERT_EQ(m.faces.size(), 2u);
  EXPECT_EQ(m.faces[0].v, (std::array<std::uint32_t, 3>{0, 1, 2}));
  EXPECT_EQ(m.faces[1].v, (std::array<std::uint32_t, 3>{0, 2, 3}));
}

TEST(Obj, IndexFormsAndNormals) {
  const auto m = parse(
      "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 2\n"
      "f 1/1/1 2/1/1 3/1/1\nf -3//-1 -2//-1 -1//-1\nf 1/1 2/1 3/1\ng ignored\nusemtl x\n");
  ASSERT_EQ(m.faces.size(), 3u);
  EXPECT_EQ(m.faces[1].v, m.faces[0].v);
  const auto& n = m.normals[m.faces[0].n[1]];
  EXPECT_DOUBLE_EQ(n.norm(), 1.0);
}

TEST(Obj, Errors) {
  try {
    parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find(":4"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse("v 0 0 0\n"); }), ErrorCode::EmptyMesh);
  EXPECT_EQ(code_of([] { parse("v 0 zero 0\nf 1 1 1\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { load_obj("/nonexistent/mesh.obj"); }), ErrorCode::ParseError);
}

TEST(Projection, PrincipalPoint) {
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  const auto p = project({0, 0, -2}, k);
  EXPECT_EQ(p[0], 320.0);
  EXPECT_EQ(p[1], 240.0);
  const auto q = project({1, 1, -2}, k);
  EXPECT_EQ(q[0], 570.0);
  EXPECT_EQ(q[1], -10.0);
}

TEST(RenderObjects, VertexAtPrincipalPointDepth) {
  // Small triangle around the optical axis at z = -2.
  TriangleMesh m;
  m.vertices = {{-0.01, -0.01, -2}, {0.01, -0.01, -2}, {0, 0.01, -2}};
  m.normals = {{0, 0, 1}};
  m.faces.push_back({{0, 1, 2}, {0, 0, 0}});
  const CameraIntrinsics k{500, 500, 320, 240, 640, 480};
  const auto layer = render_objects({{&m, Pose::identity(), 1.0, {1, 1, 1}}}, Pose::identity(), k, {0, 0, 1});
  ASSERT_TRUE(layer.covered(320, 240));
  EXPECT_FLOAT_EQ(layer.depth(320, 240), 2.0f);
  EXPECT_EQ(layer.color.pixel(320, 240)[0], 255);
  EXPECT_EQ(layer.color.pixel(320, 240)[3], 255);
}

TEST(RenderObjects, BehindCameraIsEmpty) {
  TriangleMesh m;
  m.vertices = {{-1, -1, 1}, {1, -1, 1}, {0, 1, 1}};
  m.normals = {{0, 0, -1}};
  m.faces.push_back({{0, 2, 1}, {0, 0, 0}});
  const auto k = square_k(64, 48, 64);
  const auto layer = render_objects({{&m, Pose::identity(), 1.0, {1, 1, 1}}}, Pose::identity(), k, {0, 0, 1});
  EXPECT_EQ(covered_count(layer), 0u);
}

TEST(RenderObjects, BackFacesCulled) {
  auto sq = make_square(0.25);
  const auto k = square_k(100, 100, 100);
  const Pose facing_away = Pose::translation({0, 0, -1}) * Pose::rotation_y(3.14159265358979);
  const auto layer = render_objects({{&sq, facing_away, 1.0, {1, 1, 1}}}, Pose::identity(), k, {0, 0, 1});
  EXPECT_EQ(covered_count(layer), 0u);
}

TEST(RenderObjects, SquareFootprintMatchesAnalytic) {
  const auto sq = make_square(0.25);
  const auto k = square_k(100, 100, 100);
  const auto layer =
      render_objects({{&sq, Pose::translation({0, 0, -1}), 1.0, {1, 1, 1}}}, Pose::identity(), k, {0, 0, 1});
  // Corners project to u, v in [24.5, 74.5]: 50 x 50 pixel centers.
  int u_min = 1000, u_max = -1, v_min = 1000, v_max = -1;
  for (int v = 0; v < 100; ++v)
    for (int u = 0; u < 100; ++u)
      if (layer.covered(u, v)) {
        u_min = std::min(u_min, u), u_max = std::max(u_max, u);
        v_min = std::min(v_min, v), v_max = std::max(v_max, v);
      }
  EXPECT_NEAR(u_max - u_min + 1, 50, 1);
  EXPECT_NEAR(v_max - v_min + 1, 50, 1);
  EXPECT_NEAR(static_cast<double>(covered_count(layer)), 2500.0, 101.0);
}

TEST(RenderObjects, SharedEdgeNoGapsNoOverlap) {
  // Two triangles of a square: each covered pixel drawn once, none missed.
  const auto sq = make_square(0.3);
  const auto k = square_k(97, 89, 80);
  const auto layer = render_objects({{&sq, Pose::translation({0.013, -0.007, -1.1}) * Pose::rotation_z(0.4), 1.0,
                                      {1, 1, 1}}},
                                    Pose::identity(), k, {0, 0, 1});
  // Analytic coverage: pixel centers inside the rotated square.
  const Pose inv = (Pose::translation({0.013, -0.007, -1.1}) * Pose::rotation_z(0.4)).inverse();
  int mismatches = 0;
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Vec3 ray{(u - k.cx) / k.fx, -(v - k.cy) / k.fy, -1.0};
      const Vec3 hit = ray * 1.1;
      const auto local = inv.transform_point(hit);
      const bool inside = std::abs(local.x) < 0.3 && std::abs(local.y) < 0.3;
      if (inside != layer.covered(u, v)) ++mismatches;
    }
  EXPECT_LE(mismatches, 2);
}

TEST(RenderObjects, LambertWithAmbientFloor) {
  const auto sq = make_square(0.5);
  const auto k = square_k(16, 16, 16);
  const auto lit = render_objects({{&sq, Pose::translation({0, 0, -1}), 1.0, {1, 0.5, 0}}}, Pose::identity(), k,
                                  {0, 0, 1});
  EXPECT_EQ(lit.color.pixel(8, 8)[0], 255);
  EXPECT_EQ(lit.color.pixel(8, 8)[1], 128);
  EXPECT_EQ(lit.color.pixel(8, 8)[2], 0);
  const auto grazing = render_objects({{&sq, Pose::translation({0, 0, -1}), 1.0, {1, 1, 1}}}, Pose::identity(), k,
                                      {0, 0, -1});
  EXPECT_EQ(grazing.color.pixel(8, 8)[0], static_cast<int>(std::lround(0.1 * 255)));
}

TEST(RenderObjects, ZBufferKeepsNearest) {
  const auto sq = make_square(0.5);
  const auto k = square_k(32, 32, 32);
  const auto layer = render_objects({{&sq, Pose::translation({0, 0, -2}), 2.0, {1, 0, 0}},
                                     {&sq, Pose::translation({0, 0, -1}), 0.5, {0, 1, 0}}},
                                    Pose::identity(), k, {0, 0, 1});
  EXPECT_FLOAT_EQ(layer.depth(16, 16), 1.0f);
  EXPECT_EQ(layer.color.pixel(16, 16)[1], 255);
  EXPECT_FLOAT_EQ(layer.depth(1, 1), 2.0f);
}

TEST(RenderObjects, UnprojectedPixelsLieOnSourcePlane) {
  const auto sq = make_square(0.4);
  const auto k = square_k(120, 90, 100);
  const Pose obj = Pose::translation({0.1, 0.05, -1.5}) * Pose::rotation_y(0.5) * Pose::rotation_x(-0.3);
  const Pose cam = Pose::translation({0.2, 0.1, 0.3}) * Pose::rotation_y(0.1);
  const auto layer = render_objects({{&sq, obj, 1.0, {1, 1, 1}}}, cam, k, {0, 0, 1});
  const Vec3 n = obj.transform_direction({0, 0, 1});
  const Vec3 p0 = obj.translation_part();
  int checked = 0;
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      if (!layer.covered(u, v)) continue;
      const double d = layer.depth(u, v);
      const auto world = cam.transform_point(pointcloud::unproject_pixel(u, v, d, k));
      const double footprint = d / k.fx;
      EXPECT_LE(std::abs((world - p0).dot(n)), 2 * footprint);
      ++checked;
    }
  EXPECT_GT(checked, 100);
}

TEST(OcclusionPlane, Layer) {
  const auto l = render_occlusion_plane({4, 3}, 1.25);
  for (int v = 0; v < 3; ++v)
    for (int u = 0; u < 4; ++u) {
      EXPECT_TRUE(l.covered(u, v));
      EXPECT_FLOAT_EQ(l.depth(u, v), 1.25f);
      EXPECT_EQ(l.color.pixel(u, v)[0], 0);
    }
  EXPECT_EQ(code_of([] { render_occlusion_plane({4, 3}, 0.0); }), ErrorCode::NonpositiveDepth);
  EXPECT_EQ(code_of([] { render_occlusion_plane({4, 3}, -1.0); }), ErrorCode::NonpositiveDepth);
}

TEST(OcclusionPlane, RampFarHalfBlack) {
  const int w = 8, h = 11;
  const auto m = test::make_manifest("ramp", w, h);
  Frame f = test::make_frame(0, w, h, 0);
  for (auto& s : f.rgb.values) s = 200;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) f.depth.at(u, v) = static_cast<std::uint16_t>(500 + 100 * v);
  const auto out = composite(f.rgb, render_occlusion_plane({w, h}, 1.0), f.depth, m);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const bool far = 500 + 100 * v > 1000;
      EXPECT_EQ(out.pixel(u, v)[0], far ? 0 : 200) << u << "," << v;
    }
}

TEST(OcclusionPlane, NearAndFarExtremes) {
  const auto m = test::make_manifest("s", 6, 4);
  Frame f = test::make_frame(0, 6, 4, 0);
  std::mt19937 rng(8);
  for (auto& d : f.depth.values) d = static_cast<std::uint16_t>(500 + rng() % 4500);
  const auto black = composite(f.rgb, render_occlusion_plane({6, 4}, 0.01), f.depth, m);
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 6; ++u) EXPECT_EQ(black.pixel(u, v)[1], 0);
  EXPECT_EQ(composite(f.rgb, render_occlusion_plane({6, 4}, 100.0), f.depth, m), f.rgb);
}

TEST(Composite, DepthTestCases) {
  const auto m = test::make_manifest("s", 4, 4);
  const Frame f = test::make_frame(0, 4, 4, 0);
  auto layer = render_occlusion_plane({4, 4}, 1.0, {9, 9, 9});
  const auto visible = composite(f.rgb, layer, DepthMap(4, 4, 2000), m);
  const auto hidden = composite(f.rgb, layer, DepthMap(4, 4, 500), m);
  const auto invalid = composite(f.rgb, layer, DepthMap(4, 4, 0), m);
  const auto equal = composite(f.rgb, layer, DepthMap(4, 4, 1000), m);
  for (int v = 0; v < 4; ++v)
    for (int u = 0; u < 4; ++u) {
      EXPECT_EQ(visible.pixel(u, v)[0], 9);
      EXPECT_EQ(invalid.pixel(u, v)[0], 9);
    }
  EXPECT_EQ(hidden, f.rgb);
  EXPECT_EQ(equal, f.rgb);
}

TEST(Composite, RandomMatchesBruteForce) {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 4 + static_cast<int>(rng() % 20), h = 3 + static_cast<int>(rng() % 20);
    const int dw = 1 + static_cast<int>(rng() % 25), dh = 1 + static_cast<int>(rng() % 25);
    const auto m = test::make_manifest("s", w, h, dw, dh);
    Frame f = test::make_frame(0, w, h, 0, dw, dh);
    f.depth = test::random_depth(rng, dw, dh, 0.2);
    const double plane = 0.2 + (rng() % 1000) / 100.0;
    const auto out = composite(f.rgb, render_occlusion_plane({w, h}, plane), f.depth, m);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const int su = static_cast<int>(std::floor((u + 0.5) * dw / w));
        const int sv = static_cast<int>(std::floor((v + 0.5) * dh / h));
        const auto mm = f.depth.at(su, sv);
        const bool plane_wins = mm == 0 || static_cast<float>(plane) < mm / 1000.0;
        const auto* want = plane_wins ? nullptr : f.rgb.pixel(u, v);
        for (int c = 0; c < 3; ++c) ASSERT_EQ(out.pixel(u, v)[c], want ? want[c] : 0);
      }
  }
}

TEST(Composite, ResolutionMismatch) {
  const auto m = test::make_manifest("s", 4, 4);
  EXPECT_EQ(code_of([&] { composite(RgbImage(3, 4, 3), render_occlusion_plane({4, 4}, 1.0), DepthMap(4, 4), m); }),
            ErrorCode::ResolutionMismatch);
}

TEST(Renderer, LoadsOnceAndReusesBuffers) {
  test::TempDir dir;
  {
    std::ofstream obj(dir / "tri.obj");
    obj << "v -0.5 -0.5 0\nv 0.5 -0.5 0\nv 0 0.5 0\nf 1 2 3\n";
  }
  auto m = test::make_manifest("s", 32, 24);
  for (const char* id : {"a", "b"}) {
    VirtualObject o;
    o.object_id = id;
    o.mesh_ref = "tri.obj";
    o.pose = Pose::translation({0, 0, -2});
    m.objects.push_back(o);
  }
  VirtualObject plane;
  plane.object_id = "p";
  plane.mesh_ref = "plane";
  plane.pose = Pose::translation({0, 0, -0.8});
  m.objects.push_back(plane);

  Renderer r(m, {dir.path()});
  EXPECT_EQ(r.instances().size(), 2u);
  EXPECT_EQ(r.instances()[0].mesh, r.instances()[1].mesh);
  EXPECT_DOUBLE_EQ(*r.manifest_plane_depth(), 0.8);
  r.render_objects(Pose::identity(), {0, 0, 1});
  const auto after_first = r.stats();
  for (int i = 0; i < 10; ++i) r.render_objects(Pose::identity(), {0, 0, 1});
  EXPECT_EQ(r.stats().scene_builds, 1u);
  EXPECT_EQ(r.stats().buffer_allocations, after_first.buffer_allocations);
  EXPECT_EQ(r.stats().frames_rendered, 11u);

  EXPECT_TRUE(r.set_object_pose("a", Pose::translation({5, 0, -2}), 1.0));
  EXPECT_FALSE(r.set_object_pose("zzz", Pose::identity(), 1.0));
  m.objects[0].mesh_ref = "missing.obj";
  EXPECT_EQ(code_of([&] { Renderer bad(m, {dir.path()}); }), ErrorCode::ParseError);
}
