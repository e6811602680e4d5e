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

#include "edgeval/core.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

#include "edgeval/error.hpp"

namespace edgeval {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::HeaderTooLarge: return "HeaderTooLarge";
    case ErrorCode::TooManyPayloads: return "TooManyPayloads";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::UnknownMessageType: return "UnknownMessageType";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::EncodingFailure: return "EncodingFailure";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::DuplicateSession: return "DuplicateSession";
    case ErrorCode::StorageUnavailable: return "StorageUnavailable";
    case ErrorCode::OutOfOrderFrame: return "OutOfOrderFrame";
    case ErrorCode::NoSuchSession: return "NoSuchSession";
    case ErrorCode::NoSuchFrame: return "NoSuchFrame";
    case ErrorCode::CorruptFrame: return "CorruptFrame";
    case ErrorCode::NoSuchResult: return "NoSuchResult";
    case ErrorCode::EmptySession: return "EmptySession";
    case ErrorCode::DuplicateModel: return "DuplicateModel";
    case ErrorCode::BadDescriptor: return "BadDescriptor";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::ModelTimeout: return "ModelTimeout";
    case ErrorCode::ModelError: return "ModelError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::NonpositiveDepth: return "NonpositiveDepth";
    case ErrorCode::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::InvalidProtocol: return "InvalidProtocol";
    case ErrorCode::UnknownProtocol: return "UnknownProtocol";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ConnectionRefused: return "ConnectionRefused";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::LayoutError: return "LayoutError";
  }
  return "Unknown";
}

// ---------------------------------------------------------------- Pose

Pose::Pose() : m_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1} {}

Pose Pose::translation(const Vec3& t) {
  Pose p;
  p.m_[3] = t.x;
  p.m_[7] = t.y;
  p.m_[11] = t.z;
  return p;
}

Pose Pose::rotation_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Pose({1, 0, 0, 0, 0, c, -s, 0, 0, s, c, 0, 0, 0, 0, 1});
}

Pose Pose::rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Pose({c, 0, s, 0, 0, 1, 0, 0, -s, 0, c, 0, 0, 0, 0, 1});
}

Pose Pose::rotation_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Pose({c, -s, 0, 0, s, c, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  // Camera -Z points at the target.
  const Vec3 back = (eye - target).normalized();
  const Vec3 right = up.cross(back).normalized();
  const Vec3 true_up = back.cross(right);
  return Pose({right.x, true_up.x, back.x, eye.x,
               right.y, true_up.y, back.y, eye.y,
               right.z, true_up.z, back.z, eye.z,
               0, 0, 0, 1});
}

Pose Pose::operator*(const Pose& rhs) const {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += m_[r * 4 + k] * rhs.m_[k * 4 + c];
      out[r * 4 + c] = s;
    }
  return Pose(out);
}

Pose Pose::inverse() const {
  std::array<double, 16> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[r * 4 + c] = m_[c * 4 + r];
  for (int r = 0; r < 3; ++r)
    out[r * 4 + 3] = -(out[r * 4 + 0] * m_[3] + out[r * 4 + 1] * m_[7] + out[r * 4 + 2] * m_[11]);
  out[15] = 1.0;
  return Pose(out);
}

Vec3 Pose::transform_point(const Vec3& p) const {
  return {m_[0] * p.x + m_[1] * p.y + m_[2] * p.z + m_[3],
          m_[4] * p.x + m_[5] * p.y + m_[6] * p.z + m_[7],
          m_[8] * p.x + m_[9] * p.y + m_[10] * p.z + m_[11]};
}

Vec3 Pose::transform_direction(const Vec3& d) const {
  return {m_[0] * d.x + m_[1] * d.y + m_[2] * d.z,
          m_[4] * d.x + m_[5] * d.y + m_[6] * d.z,
          m_[8] * d.x + m_[9] * d.y + m_[10] * d.z};
}

bool Pose::is_rigid(double tol) const {
  for (double v : m_)
    if (!std::isfinite(v)) return false;
  if (m_[12] != 0.0 || m_[13] != 0.0 || m_[14] != 0.0 || m_[15] != 1.0) return false;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = 0.0;
      for (int k = 0; k < 3; ++k) d += m_[k * 4 + i] * m_[k * 4 + j];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  const double det = m_[0] * (m_[5] * m_[10] - m_[6] * m_[9]) -
                     m_[1] * (m_[4] * m_[10] - m_[6] * m_[8]) +
                     m_[2] * (m_[4] * m_[9] - m_[5] * m_[8]);
  return std::abs(det - 1.0) <= tol;
}

// ---------------------------------------------------------------- images

CameraIntrinsics CameraIntrinsics::scaled_to(Resolution r) const {
  if (r.width == width && r.height == height) return *this;
  const double sx = static_cast<double>(r.width) / width;
  const double sy = static_cast<double>(r.height) / height;
  return {fx * sx, fy * sy, cx * sx, cy * sy, r.width, r.height};
}

std::uint16_t to_millimeters(double meters) {
  if (!std::isfinite(meters) || meters <= 0.0) return 0;
  const double mm = std::round(meters * kMillimetersPerMeter);
  if (mm < 1.0) return 1;
  if (mm > 65535.0) return 65535;
  return static_cast<std::uint16_t>(mm);
}

DepthMap resize_nearest(const DepthMap& src, int width, int height) {
  if (src.width == width && src.height == height) return src;
  DepthMap out(width, height);
  std::vector<int> xs(width);
  for (int x = 0; x < width; ++x)
    xs[x] = std::min(src.width - 1,
                     static_cast<int>((x + 0.5) * src.width / static_cast<double>(width)));
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(src.height - 1,
                            static_cast<int>((y + 0.5) * src.height / static_cast<double>(height)));
    for (int x = 0; x < width; ++x) out.at(x, y) = src.at(xs[x], sy);
  }
  return out;
}

// ---------------------------------------------------------------- tasks

std::string to_string(Task t) {
  switch (t) {
    case Task::object_rendering: return "object_rendering";
    case Task::occlusion_plane: return "occlusion_plane";
    case Task::point_cloud: return "point_cloud";
    case Task::env_map_eval: return "env_map_eval";
    case Task::three_sphere: return "three_sphere";
  }
  return "unknown";
}

std::optional<Task> parse_task(std::string_view s) {
  for (Task t : {Task::object_rendering, Task::occlusion_plane, Task::point_cloud,
                 Task::env_map_eval, Task::three_sphere})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

// ---------------------------------------------------------------- validation

namespace {

std::string object_path(std::size_t i, const char* field) {
  return "objects[" + std::to_string(i) + "]." + field;
}

}  // namespace

ValidationResult validate_manifest(const SessionManifest& m) {
  using V = ValidationResult;
  if (m.session_id.empty()) return V::violation("session_id", "must be nonempty");
  if (m.session_id.find_first_of("/\\") != std::string::npos || m.session_id == "." ||
      m.session_id == "..")
    return V::violation("session_id", "must be a plain name");

  const auto& k = m.intrinsics;
  if (!(k.fx > 0.0)) return V::violation("intrinsics.fx", "must be > 0");
  if (!(k.fy > 0.0)) return V::violation("intrinsics.fy", "must be > 0");
  if (k.width < 1) return V::violation("intrinsics.width", "must be >= 1");
  if (k.height < 1) return V::violation("intrinsics.height", "must be >= 1");
  if (!(k.cx >= 0.0 && k.cx < k.width)) return V::violation("intrinsics.cx", "must be in [0, width)");
  if (!(k.cy >= 0.0 && k.cy < k.height)) return V::violation("intrinsics.cy", "must be in [0, height)");

  if (m.target_resolution.width < 1) return V::violation("target_resolution.width", "must be >= 1");
  if (m.target_resolution.height < 1) return V::violation("target_resolution.height", "must be >= 1");
  if (m.depth_resolution.width < 1) return V::violation("depth_resolution.width", "must be >= 1");
  if (m.depth_resolution.height < 1) return V::violation("depth_resolution.height", "must be >= 1");

  for (std::size_t i = 0; i < m.objects.size(); ++i) {
    const auto& o = m.objects[i];
    if (o.object_id.empty()) return V::violation(object_path(i, "object_id"), "must be nonempty");
    if (o.mesh_ref.empty()) return V::violation(object_path(i, "mesh_ref"), "must be nonempty");
    if (!(o.scale > 0.0)) return V::violation(object_path(i, "scale"), "must be > 0");
    if (!o.pose.is_rigid()) return V::violation(object_path(i, "pose"), "must be a rigid transform");
    for (double c : o.base_color)
      if (!(c >= 0.0 && c <= 1.0)) return V::violation(object_path(i, "base_color"), "must be in [0, 1]");
    for (std::size_t j = 0; j < i; ++j)
      if (m.objects[j].object_id == o.object_id)
        return V::violation(object_path(i, "object_id"), "must be unique");
  }
  return V::success();
}

ValidationResult validate_environment_map(const EnvironmentMap& m) {
  using V = ValidationResult;
  if (m.height < 1) return V::violation("height", "must be >= 1");
  if (m.width != 2 * m.height) return V::violation("width", "must equal 2 * height");
  if (m.values.size() != static_cast<std::size_t>(m.width) * m.height * 3)
    return V::violation("values", "length must equal width * height * 3");
  for (float v : m.values)
    if (!std::isfinite(v) || v < 0.0f) return V::violation("values", "must be finite and >= 0");
  return V::success();
}

// ---------------------------------------------------------------- JSON

void to_json(Json& j, const Pose& p) { j = p.matrix(); }

void from_json(const Json& j, Pose& p) {
  if (!j.is_array() || j.size() != 16)
    throw Json::type_error::create(302, "pose must be a 16-element array", &j);
  std::array<double, 16> m{};
  for (std::size_t i = 0; i < 16; ++i) m[i] = j[i].get<double>();
  p = Pose(m);
}

void to_json(Json& j, const Resolution& r) { j = Json::array({r.width, r.height}); }

void from_json(const Json& j, Resolution& r) {
  if (j.is_array() && j.size() == 2) {
    r.width = j[0].get<int>();
    r.height = j[1].get<int>();
  } else {
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
  }
}

void to_json(Json& j, const CameraIntrinsics& k) {
  j = Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
           {"width", k.width}, {"height", k.height}};
}

void from_json(const Json& j, CameraIntrinsics& k) {
  j.at("fx").get_to(k.fx);
  j.at("fy").get_to(k.fy);
  j.at("cx").get_to(k.cx);
  j.at("cy").get_to(k.cy);
  j.at("width").get_to(k.width);
  j.at("height").get_to(k.height);
}

void to_json(Json& j, const VirtualObject& o) {
  j = Json{{"object_id", o.object_id}, {"mesh_ref", o.mesh_ref}, {"pose", o.pose},
           {"scale", o.scale}, {"base_color", o.base_color}};
}

void from_json(const Json& j, VirtualObject& o) {
  j.at("object_id").get_to(o.object_id);
  j.at("mesh_ref").get_to(o.mesh_ref);
  o.pose = j.contains("pose") ? j.at("pose").get<Pose>() : Pose::identity();
  o.scale = j.value("scale", 1.0);
  if (j.contains("base_color")) j.at("base_color").get_to(o.base_color);
}

void to_json(Json& j, const SessionManifest& m) {
  j = Json{{"session_id", m.session_id},
           {"intrinsics", m.intrinsics},
           {"target_resolution", m.target_resolution},
           {"depth_resolution", m.depth_resolution},
           {"objects", m.objects},
           {"created_at", m.created_at}};
}

void from_json(const Json& j, SessionManifest& m) {
  j.at("session_id").get_to(m.session_id);
  j.at("intrinsics").get_to(m.intrinsics);
  j.at("target_resolution").get_to(m.target_resolution);
  j.at("depth_resolution").get_to(m.depth_resolution);
  m.objects = j.value("objects", std::vector<VirtualObject>{});
  m.created_at = j.value("created_at", std::string{});
}

void to_json(Json& j, const ProtocolEntry& e) {
  j = Json{{"model_id", e.model_id}, {"task", to_string(e.task)},
           {"task_params", e.task_params}, {"metric_ids", e.metric_ids}};
}

void from_json(const Json& j, ProtocolEntry& e) {
  j.at("model_id").get_to(e.model_id);
  const auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Json::other_error::create(501, "unknown task " + j.at("task").dump(), &j);
  e.task = *task;
  e.task_params = j.value("task_params", Json::object());
  e.metric_ids = j.value("metric_ids", std::vector<std::string>{});
}

void to_json(Json& j, const ExperimentProtocol& p) {
  j = Json{{"protocol_id", p.protocol_id}, {"entries", p.entries}};
}

void from_json(const Json& j, ExperimentProtocol& p) {
  j.at("protocol_id").get_to(p.protocol_id);
  j.at("entries").get_to(p.entries);
}

SessionManifest parse_manifest(const Json& j) {
  try {
    return j.get<SessionManifest>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("manifest: ") + e.what());
  }
}

ExperimentProtocol parse_protocol(const Json& j) {
  try {
    return j.get<ExperimentProtocol>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidProtocol, std::string("protocol: ") + e.what());
  }
}

std::string utc_now_rfc3339() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace edgeval
