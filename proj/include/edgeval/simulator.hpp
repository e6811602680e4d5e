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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "edgeval/core.hpp"

namespace edgeval::simulator {

namespace fs = std::filesystem;

enum class Scene { ramp, step, orbiting_box };

std::optional<Scene> parse_scene(std::string_view s);
std::string to_string(Scene s);

/// Parses "WxH", e.g. "640x480".
Resolution parse_resolution(std::string_view s);

inline constexpr std::int64_t kFirstTimestampNs = 1'000'000'000;
inline constexpr std::int64_t kFramePeriodNs = 33'333'333;  // 30 fps

/// Synthetic scenes with analytic depth:
///   ramp: depth(v) = 500 + round(1000 v / (H - 1)) mm, gray RGB tracking depth;
///   step: left half 500 mm, right half 1500 mm;
///   orbiting_box: camera circling a box on a floor, ray-cast depth.
/// Intrinsics put the principal point at the image center with fx = fy = W.
/// Returns the session id (the scene name unless `session_id` is given).
std::string generate_synthetic(const fs::path& out_root, Scene scene, int n_frames, Resolution res,
                               std::optional<std::string> session_id = std::nullopt);

/// Analytic depth of the orbiting-box scene for frame `index` of `n_frames`.
Frame orbiting_box_frame(const CameraIntrinsics& k, int index, int n_frames);

/// Camera pose of frame `index` in the orbiting-box scene.
Pose orbiting_box_pose(int index, int n_frames);

struct StreamOptions {
  fs::path root;
  std::string session_id;
  std::string url;  // ws://host:port[/prefix]
  double fps = 30.0;  // <= 0 sends as fast as possible
  bool loop = false;
  int max_loops = 0;  // with loop: 0 = until interrupted
  std::optional<std::string> protocol_id;
  std::optional<std::string> stream_as;  // session id announced to the server
};

struct StreamStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t bytes_sent = 0;
  double mean_interframe_ms = 0.0;
  std::uint64_t acks_received = 0;
};

/// Sends INIT then every stored FRAME byte-for-byte, paced by deadline.
/// Throws ConnectionRefused, ProtocolError or LayoutError.
StreamStats stream_session(const StreamOptions& options);

}  // namespace edgeval::simulator
