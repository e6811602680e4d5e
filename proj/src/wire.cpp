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

#include "edgeval/wire.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include "edgeval/codec.hpp"

namespace edgeval::wire {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> buf) : buf_(buf) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (buf_.size() - pos_ < n)
      throw Error(ErrorCode::Truncated, std::string("truncated ") + what);
    auto s = buf_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
           static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(MessageType t) {
  switch (t) {
    case MessageType::Init: return "INIT";
    case MessageType::Frame: return "FRAME";
    case MessageType::Ack: return "ACK";
    case MessageType::Composite: return "COMPOSITE";
    case MessageType::Control: return "CONTROL";
    case MessageType::PointCloud: return "POINTCLOUD";
    case MessageType::Error: return "ERROR";
    case MessageType::End: return "END";
  }
  return "UNKNOWN";
}

std::optional<MessageType> message_type_from_byte(std::uint8_t b) {
  if (b < 0x01 || b > 0x08) return std::nullopt;
  return static_cast<MessageType>(b);
}

Bytes encode_raw(MessageType type, std::string_view header_json, const std::vector<Bytes>& payloads) {
  if (header_json.size() > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorCode::HeaderTooLarge, "header is " + std::to_string(header_json.size()) + " bytes");
  if (payloads.size() > kMaxPayloads)
    throw Error(ErrorCode::TooManyPayloads, std::to_string(payloads.size()) + " payloads (max 255)");

  std::size_t total = 4 + 1 + 1 + 4 + header_json.size() + 1;
  for (const auto& p : payloads) {
    if (p.size() > std::numeric_limits<std::uint32_t>::max())
      throw Error(ErrorCode::PreconditionViolation, "payload exceeds 4 GiB");
    total += 4 + p.size();
  }
  Bytes out;
  out.reserve(total);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(type));
  put_u32(out, static_cast<std::uint32_t>(header_json.size()));
  out.insert(out.end(), header_json.begin(), header_json.end());
  out.push_back(static_cast<std::uint8_t>(payloads.size()));
  for (const auto& p : payloads) {
    put_u32(out, static_cast<std::uint32_t>(p.size()));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Bytes encode(MessageType type, const Json& header, const std::vector<Bytes>& payloads) {
  return encode_raw(type, header.dump(), payloads);
}

Envelope decode(std::span<const std::uint8_t> buf) {
  Reader r(buf);
  if (buf.size() < 4) {
    if (!std::equal(buf.begin(), buf.end(), kMagic.begin())) throw Error(ErrorCode::BadMagic, "bad magic");
    throw Error(ErrorCode::Truncated, "truncated magic");
  }
  auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw Error(ErrorCode::BadMagic, "bad magic");
  const auto version = r.u8("version");
  if (version != kVersion)
    throw Error(ErrorCode::UnsupportedVersion, "unsupported version " + std::to_string(version));
  const auto type_byte = r.u8("msg_type");
  const auto type = message_type_from_byte(type_byte);
  if (!type) throw Error(ErrorCode::UnknownMessageType, "unknown msg_type " + std::to_string(type_byte));

  Envelope e;
  e.type = *type;
  const auto header_len = r.u32("header_len");
  auto header = r.take(header_len, "header");
  try {
    e.header = Json::parse(header.begin(), header.end());
  } catch (const Json::parse_error& ex) {
    throw Error(ErrorCode::MalformedHeader, std::string("header: ") + ex.what());
  }
  if (!e.header.is_object()) throw Error(ErrorCode::MalformedHeader, "header must be a JSON object");
  const auto count = r.u8("payload_count");
  e.payloads.reserve(count);
  for (unsigned i = 0; i < count; ++i) {
    const auto len = r.u32("payload length");
    auto bytes = r.take(len, "payload");
    e.payloads.emplace_back(bytes.begin(), bytes.end());
  }
  if (r.remaining() != 0)
    throw Error(ErrorCode::TrailingBytes, std::to_string(r.remaining()) + " trailing bytes");
  return e;
}

// ---------------------------------------------------------------- frames

FramePayloads encode_frame_payloads(const Frame& f) {
  if (f.depth.values.size() != static_cast<std::size_t>(f.depth.width) * f.depth.height)
    throw Error(ErrorCode::EncodingFailure, "depth map geometry mismatch");
  return {encode_png(f.rgb), encode_depth_raw(f.depth)};
}

Json frame_header(const Frame& f) {
  return Json{{"index", f.index}, {"timestamp_ns", f.timestamp_ns}, {"pose", f.pose}};
}

Envelope make_frame(const Frame& f) {
  auto p = encode_frame_payloads(f);
  return {MessageType::Frame, frame_header(f), {std::move(p.rgb_png), std::move(p.depth_raw)}};
}

Envelope make_frame(std::uint64_t index, std::int64_t timestamp_ns, const Pose& pose, Bytes rgb_png,
                    Bytes depth_raw) {
  return {MessageType::Frame,
          Json{{"index", index}, {"timestamp_ns", timestamp_ns}, {"pose", pose}},
          {std::move(rgb_png), std::move(depth_raw)}};
}

FrameMeta parse_frame_header(const Json& header) {
  try {
    FrameMeta m;
    header.at("index").get_to(m.index);
    header.at("timestamp_ns").get_to(m.timestamp_ns);
    header.at("pose").get_to(m.pose);
    return m;
  } catch (const Json::exception& ex) {
    throw Error(ErrorCode::MalformedHeader, std::string("frame header: ") + ex.what());
  }
}

Frame decode_frame(const Envelope& e, const SessionManifest& manifest) {
  if (e.type != MessageType::Frame) throw Error(ErrorCode::ProtocolError, "expected FRAME");
  if (e.payloads.size() != 2)
    throw Error(ErrorCode::SchemaMismatch, "FRAME carries " + std::to_string(e.payloads.size()) + " payloads, expected 2");
  const auto meta = parse_frame_header(e.header);
  Frame f;
  f.index = meta.index;
  f.timestamp_ns = meta.timestamp_ns;
  f.pose = meta.pose;
  try {
    f.rgb = decode_png(e.payloads[0]);
  } catch (const Error& ex) {
    throw Error(ErrorCode::SchemaMismatch, ex.what());
  }
  f.depth = decode_depth_raw(e.payloads[1], manifest.depth_resolution.width, manifest.depth_resolution.height);
  return f;
}

std::string encode_rest_image(std::span<const std::uint8_t> img) { return base64_encode(img); }
Bytes decode_rest_image(std::string_view text) { return base64_decode(text); }

// ---------------------------------------------------------------- control

std::string_view to_string(ReplayMode m) { return m == ReplayMode::video ? "video" : "frame_by_frame"; }

std::optional<ReplayMode> parse_replay_mode(std::string_view s) {
  if (s == "video") return ReplayMode::video;
  if (s == "frame_by_frame") return ReplayMode::frame_by_frame;
  return std::nullopt;
}

ControlCommand parse_control(const Json& j) {
  ControlCommand cmd;
  std::string type;
  try {
    type = j.at("type").get<std::string>();
    const auto sid = j.at("session_id").get<std::string>();
    if (type == "set_plane_depth") {
      cmd = SetPlaneDepth{sid, j.at("depth_m").get<double>()};
    } else if (type == "set_object_pose") {
      cmd = SetObjectPose{sid, j.at("object_id").get<std::string>(), j.at("pose").get<Pose>(),
                          j.value("scale", 1.0)};
    } else if (type == "select_models") {
      cmd = SelectModels{sid, j.at("model_ids").get<std::vector<std::string>>()};
    } else if (type == "replay_seek") {
      cmd = ReplaySeek{sid, j.at("frame_index").get<std::uint64_t>()};
    } else if (type == "replay_mode") {
      const auto mode = parse_replay_mode(j.at("mode").get<std::string>());
      if (!mode) throw Error(ErrorCode::MalformedHeader, "replay_mode: mode must be video or frame_by_frame");
      cmd = ReplayModeCmd{sid, *mode, j.value("fps", 30.0)};
    } else {
      throw Error(ErrorCode::MalformedHeader, "unknown control type '" + type + "'");
    }
  } catch (const Json::exception& ex) {
    throw Error(ErrorCode::MalformedHeader, std::string("control: ") + ex.what());
  }

  if (const auto* p = std::get_if<SetPlaneDepth>(&cmd); p && !(p->depth_m > 0.0))
    throw Error(ErrorCode::NonpositiveDepth, "depth_m must be > 0");
  if (const auto* p = std::get_if<SetObjectPose>(&cmd)) {
    if (!(p->scale > 0.0)) throw Error(ErrorCode::PreconditionViolation, "scale must be > 0");
    if (!p->pose.is_rigid()) throw Error(ErrorCode::PreconditionViolation, "pose must be rigid");
  }
  if (const auto* p = std::get_if<ReplayModeCmd>(&cmd); p && !(p->fps >= 0.0))
    throw Error(ErrorCode::PreconditionViolation, "fps must be >= 0");
  return cmd;
}

Json control_to_json(const ControlCommand& c) {
  return std::visit(
      [](const auto& cmd) -> Json {
        using T = std::decay_t<decltype(cmd)>;
        if constexpr (std::is_same_v<T, SetPlaneDepth>)
          return {{"type", "set_plane_depth"}, {"session_id", cmd.session_id}, {"depth_m", cmd.depth_m}};
        else if constexpr (std::is_same_v<T, SetObjectPose>)
          return {{"type", "set_object_pose"}, {"session_id", cmd.session_id}, {"object_id", cmd.object_id},
                  {"pose", cmd.pose}, {"scale", cmd.scale}};
        else if constexpr (std::is_same_v<T, SelectModels>)
          return {{"type", "select_models"}, {"session_id", cmd.session_id}, {"model_ids", cmd.model_ids}};
        else if constexpr (std::is_same_v<T, ReplaySeek>)
          return {{"type", "replay_seek"}, {"session_id", cmd.session_id}, {"frame_index", cmd.frame_index}};
        else
          return {{"type", "replay_mode"}, {"session_id", cmd.session_id},
                  {"mode", std::string(to_string(cmd.mode))}, {"fps", cmd.fps}};
      },
      c);
}

const std::string& control_session(const ControlCommand& c) {
  return std::visit([](const auto& cmd) -> const std::string& { return cmd.session_id; }, c);
}

std::string_view control_name(const ControlCommand& c) {
  static constexpr std::string_view names[] = {"set_plane_depth", "set_object_pose", "select_models",
                                               "replay_seek", "replay_mode"};
  return names[c.index()];
}

// ---------------------------------------------------------------- helpers

Envelope make_ack(Json header) { return {MessageType::Ack, std::move(header), {}}; }

Envelope make_error(ErrorCode code, const std::string& message, Json extra) {
  Json h = std::move(extra);
  if (!h.is_object()) h = Json::object();
  h["code"] = std::string(edgeval::to_string(code));
  h["message"] = message;
  return {MessageType::Error, std::move(h), {}};
}

Envelope make_end() { return {MessageType::End, Json::object(), {}}; }

}  // namespace edgeval::wire
