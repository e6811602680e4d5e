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

#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "edgeval/error.hpp"
#include "edgeval/pointcloud.hpp"
#include "edgeval/render.hpp"
#include "support.hpp"

using namespace edgeval;
using namespace edgeval::pointcloud;

namespace {

const char* kHeader1 =
    "VERSION 0.7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\nWIDTH 1\nHEIGHT 1\n"
    "VIEWPOINT 0 0 0 1 0 0 0\nPOINTS 1\nDATA binary\n";

ColoredPointSet random_points(std::mt19937& rng, std::size_t n) {
  std::uniform_real_distribution<float> pos(-5.0f, 5.0f);
  ColoredPointSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t c[3] = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                               static_cast<std::uint8_t>(rng())};
    s.push({pos(rng), pos(rng), pos(rng)}, c);
  }
  return s;
}

}  // namespace

TEST(Unproject, PrincipalRay) {
  DepthMap d(5, 5);
  d.at(2, 2) = 2000;
  RgbImage rgb(5, 5, 3);
  rgb.pixel(2, 2)[0] = 7;
  const CameraIntrinsics k{4, 4, 2, 2, 5, 5};
  const auto pts = unproject(d, rgb, k, Pose::identity(), 1);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts.xyz[0], (std::array<float, 3>{0, 0, -2}));
  EXPECT_EQ(pts.rgb[0][0], 7);
}

TEST(Unproject, HandExample) {
  const CameraIntrinsics k{2, 2, 1, 1, 2, 2};
  const auto pts = unproject(DepthMap(2, 2, 1000), RgbImage(2, 2, 3), k, Pose::identity(), 1);
  ASSERT_EQ(pts.size(), 4u);
  std::set<float> xs, ys;
  for (const auto& p : pts.xyz) {
    xs.insert(p[0]);
    ys.insert(p[1]);
    EXPECT_EQ(p[2], -1.0f);
  }
  EXPECT_EQ(xs, (std::set<float>{-0.5f, 0.0f}));
  EXPECT_EQ(ys, (std::set<float>{0.5f, 0.0f}));
}

TEST(Unproject, StridePoseAndErrors) {
  const CameraIntrinsics k{10, 10, 4.5, 3.5, 10, 8};
  const auto pts = unproject(DepthMap(10, 8, 1500), RgbImage(10, 8, 3), k, Pose::translation({1, 2, 3}), 2);
  EXPECT_EQ(pts.size(), 5u * 4u);
  for (const auto& p : pts.xyz) EXPECT_FLOAT_EQ(p[2], 1.5f);
  EXPECT_THROW(unproject(DepthMap(4, 4, 0), RgbImage(4, 4, 3), k, Pose::identity(), 1), Error);
  try {
    unproject(DepthMap(4, 4, 0), RgbImage(4, 4, 3), k, Pose::identity(), 1);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoValidPixels);
  }
  EXPECT_THROW(unproject(DepthMap(4, 4, 10), RgbImage(4, 4, 3), k, Pose::identity(), 0), Error);
}

TEST(Unproject, ColorSampledAcrossResolutions) {
  RgbImage rgb(8, 8, 3);
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) rgb.pixel(u, v)[0] = static_cast<std::uint8_t>(u * 10 + v);
  const CameraIntrinsics k{8, 8, 3.5, 3.5, 8, 8};
  const auto pts = unproject(DepthMap(4, 4, 1000), rgb, k, Pose::identity(), 1);
  ASSERT_EQ(pts.size(), 16u);
  // Depth pixel (1, 2) maps to RGB pixel (3, 5).
  EXPECT_EQ(pts.rgb[2 * 4 + 1][0], 35);
}

TEST(Unproject, ProjectsBackToPixelCenter) {
  std::mt19937 rng(9);
  const CameraIntrinsics k{525, 525, 319.5, 239.5, 640, 480};
  const Pose cam = Pose::translation({0.3, -0.2, 1.0}) * Pose::rotation_y(0.3) * Pose::rotation_x(0.1);
  const auto depth = test::random_depth(rng, 64, 48, 0.1);
  const auto kd = k.scaled_to({64, 48});
  const auto pts = unproject(depth, RgbImage(64, 48, 3), k, cam, 1);
  const Pose inv = cam.inverse();
  std::size_t i = 0;
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 64; ++u) {
      if (depth.at(u, v) == 0) continue;
      const auto& p = pts.xyz[i++];
      const auto uv = render::project(inv.transform_point({p[0], p[1], p[2]}), kd);
      EXPECT_NEAR(uv[0], u, 0.5);
      EXPECT_NEAR(uv[1], v, 0.5);
    }
  EXPECT_EQ(i, pts.size());
}

TEST(VirtualToPoints, Layers) {
  const CameraIntrinsics k{20, 20, 9.5, 7.5, 20, 16};
  EXPECT_TRUE(virtual_to_points(render::RenderLayer(20, 16), k, Pose::identity(), 1).empty());
  const auto plane = render::render_occlusion_plane({20, 16}, 1.75);
  const auto pts = virtual_to_points(plane, k, Pose::identity(), 1);
  EXPECT_EQ(pts.size(), 320u);
  for (const auto& p : pts.xyz) EXPECT_FLOAT_EQ(p[2], -1.75f);

  const auto sq = render::make_square(0.3);
  const auto layer =
      render::render_objects({{&sq, Pose::translation({0, 0, -1}), 1.0, {1, 1, 1}}}, Pose::identity(), k, {0, 0, 1});
  std::size_t masked = 0;
  for (int v = 0; v < 16; ++v)
    for (int u = 0; u < 20; ++u) masked += layer.covered(u, v);
  const auto strided = virtual_to_points(layer, k, Pose::identity(), 2);
  EXPECT_GT(strided.size(), 0u);
  EXPECT_LE(strided.size(), masked / 4 + 16);
}

TEST(Pcd, SinglePointExactBytes) {
  ColoredPointSet s;
  const std::uint8_t white[3] = {255, 255, 255};
  s.push({0, 0, -2}, white);
  const auto bytes = encode_pcd(s);
  const std::string header(kHeader1);
  ASSERT_EQ(bytes.size(), header.size() + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
  // z = -2.0f little endian, then 0x00FFFFFF.
  const Bytes tail(bytes.end() - 8, bytes.end());
  EXPECT_EQ(tail, (Bytes{0x00, 0x00, 0x00, 0xC0, 0xFF, 0xFF, 0xFF, 0x00}));
  const auto back = parse_pcd(bytes);
  EXPECT_EQ(back.xyz, s.xyz);
  EXPECT_EQ(back.rgb, s.rgb);
}

TEST(Pcd, EmptyAndMerge) {
  test::TempDir dir;
  const auto path = (dir / "e.pcd").string();
  const auto n = merge_and_write_pcd({}, {}, path);
  std::ifstream in(path, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text.size(), n);
  EXPECT_NE(text.find("POINTS 0\nDATA binary\n"), std::string::npos);
  EXPECT_EQ(text.substr(text.size() - 12), "DATA binary\n");

  std::mt19937 rng(2);
  const auto a = random_points(rng, 37), b = random_points(rng, 11);
  const auto m = merge(a, b);
  EXPECT_EQ(m.size(), 48u);
  EXPECT_EQ(m.xyz[37], b.xyz[0]);
  // WIDTH and POINTS each gain one digit over the single-point header.
  EXPECT_EQ(merge_and_write_pcd(a, b, path), std::string(kHeader1).size() + 2 + 48 * 16);
  EXPECT_THROW(merge_and_write_pcd(a, b, (dir / "missing" / "x.pcd").string()), Error);
}

TEST(Pcd, RandomRoundTripExact) {
  std::mt19937 rng(17);
  for (std::size_t n : {0u, 1u, 5u, 1000u}) {
    const auto s = random_points(rng, n);
    const auto back = parse_pcd(encode_pcd(s));
    EXPECT_EQ(back.xyz, s.xyz);
    EXPECT_EQ(back.rgb, s.rgb);
  }
}

TEST(Pcd, ParseRejectsMalformed) {
  std::mt19937 rng(3);
  auto bytes = encode_pcd(random_points(rng, 3));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(parse_pcd(truncated), Error);
  const std::string ascii = "VERSION 0.7\nFIELDS x y z rgb\nPOINTS 0\nDATA ascii\n";
  EXPECT_THROW(parse_pcd(Bytes(ascii.begin(), ascii.end())), Error);
  const std::string no_data = "VERSION 0.7\nFIELDS x y z rgb\n";
  EXPECT_THROW(parse_pcd(Bytes(no_data.begin(), no_data.end())), Error);
}
