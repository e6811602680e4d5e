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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/error.hpp"

namespace edgeval::wire {

// Envelope layout (little-endian):
//   "ARCD" | version u8 | msg_type u8 | header_len u32 | header JSON |
//   payload_count u8 | payload_count x (len u32 | bytes)
inline constexpr std::array<std::uint8_t, 4> kMagic{'A', 'R', 'C', 'D'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kMaxPayloads = 255;

enum class MessageType : std::uint8_t {
  Init = 0x01,
  Frame = 0x02,
  Ack = 0x03,
  Composite = 0x04,
  Control = 0x05,
  PointCloud = 0x06,
  Error = 0x07,
  End = 0x08,
};

std::string_view to_string(MessageType t);
std::optional<MessageType> message_type_from_byte(std::uint8_t b);

struct Envelope {
  MessageType type = MessageType::End;
  Json header = Json::object();
  std::vector<Bytes> payloads;

  bool operator==(const Envelope&) const = default;
};

Bytes encode(MessageType type, const Json& header, const std::vector<Bytes>& payloads);
inline Bytes encode(const Envelope& e) { return encode(e.type, e.header, e.payloads); }
/// Lower-level variant taking an already-serialized header.
Bytes encode_raw(MessageType type, std::string_view header_json, const std::vector<Bytes>& payloads);

Envelope decode(std::span<const std::uint8_t> buf);

// ---------------------------------------------------------------- frames

struct FramePayloads {
  Bytes rgb_png;
  Bytes depth_raw;
};

FramePayloads encode_frame_payloads(const Frame& f);

/// FRAME header: {index, timestamp_ns, pose} only; everything static lives
/// in the INIT manifest.
Json frame_header(const Frame& f);
Envelope make_frame(const Frame& f);
Envelope make_frame(std::uint64_t index, std::int64_t timestamp_ns, const Pose& pose,
                    Bytes rgb_png, Bytes depth_raw);

struct FrameMeta {
  std::uint64_t index = 0;
  std::int64_t timestamp_ns = 0;
  Pose pose;
};
FrameMeta parse_frame_header(const Json& header);

/// Reassembles a Frame from a FRAME envelope; depth geometry comes from the
/// session manifest.
Frame decode_frame(const Envelope& e, const SessionManifest& manifest);

std::string encode_rest_image(std::span<const std::uint8_t> img);
Bytes decode_rest_image(std::string_view text);

// ---------------------------------------------------------------- control

struct SetPlaneDepth {
  std::string session_id;
  double depth_m = 1.0;
};
struct SetObjectPose {
  std::string session_id;
  std::string object_id;
  Pose pose;
  double scale = 1.0;
};
struct SelectModels {
  std::string session_id;
  std::vector<std::string> model_ids;
};
struct ReplaySeek {
  std::string session_id;
  std::uint64_t frame_index = 0;
};
enum class ReplayMode { video, frame_by_frame };
struct ReplayModeCmd {
  std::string session_id;
  ReplayMode mode = ReplayMode::video;
  double fps = 30.0;
};

using ControlCommand = std::variant<SetPlaneDepth, SetObjectPose, SelectModels, ReplaySeek, ReplayModeCmd>;

/// {"type": "set_plane_depth", ...}. Throws Error(MalformedHeader) on shape
/// errors and Error(NonpositiveDepth / PreconditionViolation) on range errors.
ControlCommand parse_control(const Json& j);
Json control_to_json(const ControlCommand& c);
const std::string& control_session(const ControlCommand& c);
std::string_view control_name(const ControlCommand& c);
std::string_view to_string(ReplayMode m);
std::optional<ReplayMode> parse_replay_mode(std::string_view s);

// ---------------------------------------------------------------- helpers

Envelope make_ack(Json header = Json::object());
Envelope make_error(ErrorCode code, const std::string& message, Json extra = Json::object());
Envelope make_end();

}  // namespace edgeval::wire
