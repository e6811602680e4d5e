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
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace edgeval {

using Json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

// Coordinate convention everywhere: right-handed, camera looks down -Z,
// X right, Y up. Depth samples are millimeters in uint16, 0 = invalid.

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  bool operator==(const Vec3&) const = default;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? *this * (1.0 / n) : *this;
  }
};

/// Rigid transform as a 4x4 row-major matrix. Camera poses are stored
/// camera-to-world; world-to-camera is `inverse()`.
class Pose {
 public:
  Pose();  // identity
  explicit Pose(const std::array<double, 16>& m) : m_(m) {}

  static Pose identity() { return Pose(); }
  static Pose translation(const Vec3& t);
  static Pose rotation_x(double radians);
  static Pose rotation_y(double radians);
  static Pose rotation_z(double radians);
  /// Camera-to-world pose of a camera at `eye` looking at `target`.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 1, 0});

  double operator()(int row, int col) const { return m_[row * 4 + col]; }
  const std::array<double, 16>& matrix() const { return m_; }

  Pose operator*(const Pose& rhs) const;
  Pose inverse() const;  // rigid inverse: [R^T | -R^T t]

  Vec3 transform_point(const Vec3& p) const;
  Vec3 transform_direction(const Vec3& d) const;
  Vec3 translation_part() const { return {m_[3], m_[7], m_[11]}; }

  /// True when the upper-left block is orthonormal with det +1 (1e-6) and
  /// the last row is (0,0,0,1).
  bool is_rigid(double tol = 1e-6) const;

  bool operator==(const Pose&) const = default;

 private:
  std::array<double, 16> m_;
};

struct Resolution {
  int width = 0;
  int height = 0;
  bool operator==(const Resolution&) const = default;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Intrinsics for the same camera sampled at another resolution.
  CameraIntrinsics scaled_to(Resolution r) const;
  bool operator==(const CameraIntrinsics&) const = default;
};

inline constexpr double kMillimetersPerMeter = 1000.0;

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> values;  // millimeters, row-major, 0 = invalid

  DepthMap() = default;
  DepthMap(int w, int h, std::uint16_t fill = 0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  std::uint16_t at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
  std::uint16_t& at(int u, int v) { return values[static_cast<std::size_t>(v) * width + u]; }
  double meters(int u, int v) const { return at(u, v) / kMillimetersPerMeter; }
  bool operator==(const DepthMap&) const = default;
};

inline double to_meters(std::uint16_t mm) { return mm / kMillimetersPerMeter; }
/// Rounds to the nearest millimeter and saturates into the valid range;
/// non-positive or non-finite input maps to 0 (invalid).
std::uint16_t to_millimeters(double meters);

/// Nearest-neighbor resample; source pixel = floor((dst + 0.5) * src / dst).
DepthMap resize_nearest(const DepthMap& src, int width, int height);

struct RgbImage {
  int width = 0;
  int height = 0;
  int channels = 3;  // 3 = RGB, 4 = RGBA
  std::vector<std::uint8_t> values;

  RgbImage() = default;
  RgbImage(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        values(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t* pixel(int u, int v) {
    return values.data() + (static_cast<std::size_t>(v) * width + u) * channels;
  }
  const std::uint8_t* pixel(int u, int v) const {
    return values.data() + (static_cast<std::size_t>(v) * width + u) * channels;
  }
  bool operator==(const RgbImage&) const = default;
};

struct Frame {
  std::uint64_t index = 0;
  std::int64_t timestamp_ns = 0;
  RgbImage rgb;
  DepthMap depth;
  Pose pose;
  bool operator==(const Frame&) const = default;
};

struct VirtualObject {
  std::string object_id;
  std::string mesh_ref;  // OBJ path, or "plane" for the occlusion plane primitive
  Pose pose;             // object-to-world
  double scale = 1.0;
  std::array<double, 3> base_color{0.8, 0.8, 0.8};
  bool operator==(const VirtualObject&) const = default;

  bool is_plane() const { return mesh_ref == kPlaneMesh; }
  static constexpr const char* kPlaneMesh = "plane";
};

struct SessionManifest {
  std::string session_id;
  CameraIntrinsics intrinsics;
  Resolution target_resolution;
  Resolution depth_resolution;
  std::vector<VirtualObject> objects;
  std::string created_at;  // RFC 3339 UTC
  bool operator==(const SessionManifest&) const = default;
};

/// Equirectangular linear RGB radiance; width = 2 * height.
struct EnvironmentMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major RGB triples

  EnvironmentMap() = default;
  EnvironmentMap(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h * 3, fill) {}

  const float* texel(int u, int v) const {
    return values.data() + (static_cast<std::size_t>(v) * width + u) * 3;
  }
  float* texel(int u, int v) {
    return values.data() + (static_cast<std::size_t>(v) * width + u) * 3;
  }
  bool operator==(const EnvironmentMap&) const = default;
};

enum class Task { object_rendering, occlusion_plane, point_cloud, env_map_eval, three_sphere };

std::string to_string(Task t);
std::optional<Task> parse_task(std::string_view s);

struct ProtocolEntry {
  std::string model_id;
  Task task = Task::occlusion_plane;
  Json task_params = Json::object();
  std::vector<std::string> metric_ids;
  bool operator==(const ProtocolEntry&) const = default;
};

struct ExperimentProtocol {
  std::string protocol_id;
  std::vector<ProtocolEntry> entries;
  bool operator==(const ExperimentProtocol&) const = default;
};

struct ValidationResult {
  bool ok = true;
  std::string field;    // e.g. "objects[0].scale"
  std::string message;  // e.g. "objects[0].scale must be > 0"

  explicit operator bool() const { return ok; }
  static ValidationResult success() { return {}; }
  static ValidationResult violation(std::string field, const std::string& rule) {
    ValidationResult r;
    r.ok = false;
    r.message = field + " " + rule;
    r.field = std::move(field);
    return r;
  }
};

ValidationResult validate_manifest(const SessionManifest& m);
ValidationResult validate_environment_map(const EnvironmentMap& m);

// JSON conversion. Matrices serialize as flat 16-element row-major arrays.
void to_json(Json& j, const Pose& p);
void from_json(const Json& j, Pose& p);
void to_json(Json& j, const Resolution& r);
void from_json(const Json& j, Resolution& r);
void to_json(Json& j, const CameraIntrinsics& k);
void from_json(const Json& j, CameraIntrinsics& k);
void to_json(Json& j, const VirtualObject& o);
void from_json(const Json& j, VirtualObject& o);
void to_json(Json& j, const SessionManifest& m);
void from_json(const Json& j, SessionManifest& m);
void to_json(Json& j, const ProtocolEntry& e);
void from_json(const Json& j, ProtocolEntry& e);
void to_json(Json& j, const ExperimentProtocol& p);
void from_json(const Json& j, ExperimentProtocol& p);

/// Parses a manifest, mapping JSON type/shape errors to ErrorCode::MalformedHeader.
SessionManifest parse_manifest(const Json& j);
ExperimentProtocol parse_protocol(const Json& j);

std::string utc_now_rfc3339();

}  // namespace edgeval
