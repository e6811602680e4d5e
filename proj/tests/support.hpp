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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "edgeval/core.hpp"
#include "edgeval/error.hpp"

namespace edgeval::test {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("edgeval-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline SessionManifest make_manifest(const std::string& id, int w, int h, int dw = 0, int dh = 0) {
  SessionManifest m;
  m.session_id = id;
  m.intrinsics = {static_cast<double>(w), static_cast<double>(w), (w - 1) / 2.0, (h - 1) / 2.0, w, h};
  m.target_resolution = {w, h};
  m.depth_resolution = {dw ? dw : w, dh ? dh : h};
  m.created_at = "2026-01-01T00:00:00Z";
  return m;
}

/// Frame with uniform depth and a deterministic RGB pattern.
inline Frame make_frame(std::uint64_t index, int w, int h, std::uint16_t depth_mm, int dw = 0, int dh = 0) {
  Frame f;
  f.index = index;
  f.timestamp_ns = 1'000'000'000 + static_cast<std::int64_t>(index) * 33'333'333;
  f.rgb = RgbImage(w, h, 3);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      auto* p = f.rgb.pixel(u, v);
      p[0] = static_cast<std::uint8_t>(u * 7 + index);
      p[1] = static_cast<std::uint8_t>(v * 11);
      p[2] = static_cast<std::uint8_t>((u + v) * 3);
    }
  f.depth = DepthMap(dw ? dw : w, dh ? dh : h, depth_mm);
  return f;
}

inline DepthMap random_depth(std::mt19937& rng, int w, int h, double invalid_fraction = 0.1) {
  std::uniform_int_distribution<int> mm(200, 10000);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  DepthMap d(w, h);
  for (auto& v : d.values) v = u01(rng) < invalid_fraction ? 0 : static_cast<std::uint16_t>(mm(rng));
  return d;
}

/// Code of the Error thrown by `fn`; fails the test when nothing is thrown.
inline ErrorCode error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::PreconditionViolation;
}

/// Vertical ramp: row v is 500 + round(1000 v / (h - 1)) mm, gray RGB.
inline Frame ramp_frame(std::uint64_t index, int w, int h) {
  Frame f = make_frame(index, w, h, 0);
  for (auto& s : f.rgb.values) s = 200;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      f.depth.at(u, v) = static_cast<std::uint16_t>(500 + std::lround(1000.0 * v / (h - 1)));
  return f;
}

}  // namespace edgeval::test
