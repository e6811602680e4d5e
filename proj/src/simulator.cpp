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

#include "edgeval/simulator.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <thread>

#include "edgeval/mesh.hpp"
#include "edgeval/store.hpp"
#include "edgeval/wire.hpp"

namespace edgeval::simulator {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::optional<Scene> parse_scene(std::string_view s) {
  if (s == "ramp") return Scene::ramp;
  if (s == "step") return Scene::step;
  if (s == "orbiting-box" || s == "orbiting_box") return Scene::orbiting_box;
  return std::nullopt;
}

std::string to_string(Scene s) {
  switch (s) {
    case Scene::ramp: return "ramp";
    case Scene::step: return "step";
    case Scene::orbiting_box: return "orbiting-box";
  }
  return "unknown";
}

Resolution parse_resolution(std::string_view s) {
  static const std::regex re(R"(^([0-9]{1,5})[xX]([0-9]{1,5})$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(s.begin(), s.end(), m, re) || std::stoi(m[1]) < 1 || std::stoi(m[2]) < 1)
    throw Error(ErrorCode::PreconditionViolation, "resolution must be WxH, got '" + std::string(s) + "'");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

namespace {

constexpr double kBoxHalf = 0.25;
constexpr double kFloorY = -kBoxHalf;
constexpr double kOrbitRadius = 1.5;
constexpr double kOrbitHeight = 0.4;
constexpr double kMaxRange = 10.0;

CameraIntrinsics centered_intrinsics(Resolution r) {
  return {static_cast<double>(r.width), static_cast<double>(r.width), (r.width - 1) / 2.0, (r.height - 1) / 2.0,
          r.width, r.height};
}

Frame blank_frame(Resolution r, int index) {
  Frame f;
  f.index = static_cast<std::uint64_t>(index);
  f.timestamp_ns = kFirstTimestampNs + index * kFramePeriodNs;
  f.rgb = RgbImage(r.width, r.height, 3);
  f.depth = DepthMap(r.width, r.height);
  return f;
}

void set_gray(RgbImage& img, int u, int v, std::uint8_t g) {
  auto* p = img.pixel(u, v);
  p[0] = p[1] = p[2] = g;
}

Frame ramp_frame(Resolution r, int index) {
  Frame f = blank_frame(r, index);
  for (int v = 0; v < r.height; ++v) {
    const double t = r.height > 1 ? static_cast<double>(v) / (r.height - 1) : 0.0;
    const auto mm = static_cast<std::uint16_t>(500 + std::lround(1000.0 * t));
    const auto gray = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
    for (int u = 0; u < r.width; ++u) {
      f.depth.at(u, v) = mm;
      set_gray(f.rgb, u, v, gray);
    }
  }
  return f;
}

Frame step_frame(Resolution r, int index) {
  Frame f = blank_frame(r, index);
  for (int v = 0; v < r.height; ++v)
    for (int u = 0; u < r.width; ++u) {
      const bool near = u < r.width / 2;
      f.depth.at(u, v) = near ? 500 : 1500;
      set_gray(f.rgb, u, v, near ? 200 : 60);
    }
  return f;
}

/// Slab-method ray/box hit; returns the entry distance and face normal.
std::optional<std::pair<double, Vec3>> hit_box(const Vec3& o, const Vec3& d) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  Vec3 normal;
  const double oc[3] = {o.x, o.y, o.z};
  const double dc[3] = {d.x, d.y, d.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(dc[axis]) < 1e-12) {
      if (std::abs(oc[axis]) > kBoxHalf) return std::nullopt;
      continue;
    }
    double t0 = (-kBoxHalf - oc[axis]) / dc[axis];
    double t1 = (kBoxHalf - oc[axis]) / dc[axis];
    double sign = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      normal = Vec3{axis == 0 ? sign : 0.0, axis == 1 ? sign : 0.0, axis == 2 ? sign : 0.0};
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0) return std::nullopt;
  return std::make_pair(t_near, normal);
}

void write_box_obj(const fs::path& path, double half) {
  const auto mesh = render::make_box({half, half, half});
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::StorageUnavailable, "cannot write " + path.string());
  out << "# virtual cube\n";
  for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.faces) out << "f " << f.v[0] + 1 << ' ' << f.v[1] + 1 << ' ' << f.v[2] + 1 << '\n';
}

}  // namespace

Pose orbiting_box_pose(int index, int n_frames) {
  const double step = std::min(3.0, 360.0 / std::max(n_frames, 1)) * M_PI / 180.0;
  const double a = index * step;
  return Pose::look_at({kOrbitRadius * std::sin(a), kOrbitHeight, kOrbitRadius * std::cos(a)}, {0, 0, 0});
}

Frame orbiting_box_frame(const CameraIntrinsics& k, int index, int n_frames) {
  Frame f = blank_frame({k.width, k.height}, index);
  f.pose = orbiting_box_pose(index, n_frames);
  const Vec3 eye = f.pose.translation_part();
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      // Camera-space ray through the pixel center at unit depth.
      const Vec3 cam_dir{(u - k.cx) / k.fx, -(v - k.cy) / k.fy, -1.0};
      const Vec3 dir = f.pose.transform_direction(cam_dir);  // not normalized: t is camera depth
      double depth = std::numeric_limits<double>::infinity();
      std::array<std::uint8_t, 3> color{30, 30, 40};
      if (const auto hit = hit_box(eye, dir)) {
        depth = hit->first;
        const auto& n = hit->second;
        const double shade = 0.4 + 0.6 * std::max(0.0, n.dot(Vec3{0.3, 0.8, 0.5}.normalized()));
        color = {static_cast<std::uint8_t>(220 * shade), static_cast<std::uint8_t>(120 * shade),
                 static_cast<std::uint8_t>(40 * shade)};
      } else if (dir.y < 0) {
        const double t = (kFloorY - eye.y) / dir.y;
        const Vec3 p = eye + dir * t;
        depth = t;
        const bool check = (static_cast<int>(std::floor(p.x * 4)) + static_cast<int>(std::floor(p.z * 4))) % 2 == 0;
        color = check ? std::array<std::uint8_t, 3>{170, 170, 170} : std::array<std::uint8_t, 3>{90, 90, 90};
      }
      if (depth < kMaxRange) f.depth.at(u, v) = to_millimeters(depth);
      std::copy(color.begin(), color.end(), f.rgb.pixel(u, v));
    }
  return f;
}

std::string generate_synthetic(const fs::path& out_root, Scene scene, int n_frames, Resolution res,
                               std::optional<std::string> session_id) {
  if (n_frames < 1) throw Error(ErrorCode::PreconditionViolation, "frames must be >= 1");
  if (res.width < 2 || res.height < 2) throw Error(ErrorCode::PreconditionViolation, "resolution must be >= 2x2");

  SessionManifest m;
  m.session_id = session_id.value_or(to_string(scene));
  m.intrinsics = centered_intrinsics(res);
  m.target_resolution = res;
  m.depth_resolution = res;
  m.created_at = utc_now_rfc3339();
  VirtualObject plane;
  plane.object_id = "occluder";
  plane.mesh_ref = VirtualObject::kPlaneMesh;
  plane.pose = Pose::translation({0, 0, -1.0});
  plane.base_color = {0, 0, 0};
  m.objects.push_back(plane);

  store::SessionStore store(out_root);
  if (scene == Scene::orbiting_box) {
    VirtualObject cube;
    cube.object_id = "cube";
    cube.mesh_ref = fs::absolute(store.session_dir(m.session_id) / "cube.obj").lexically_normal().string();
    cube.pose = Pose::translation({0.45, kFloorY + 0.1, 0.2});
    cube.base_color = {0.2, 0.6, 0.9};
    m.objects.push_back(cube);
  }
  auto handle = store.begin_session(m);
  if (scene == Scene::orbiting_box) write_box_obj(m.objects.back().mesh_ref, 0.1);

  for (int i = 0; i < n_frames; ++i) {
    switch (scene) {
      case Scene::ramp: store.append_frame(handle, ramp_frame(res, i)); break;
      case Scene::step: store.append_frame(handle, step_frame(res, i)); break;
      case Scene::orbiting_box: store.append_frame(handle, orbiting_box_frame(m.intrinsics, i, n_frames)); break;
    }
  }
  return m.session_id;
}

// ---------------------------------------------------------------- streaming

namespace {

struct WsUrl {
  std::string host;
  std::string port;
  std::string prefix;
};

WsUrl parse_ws_url(const std::string& url) {
  static const std::regex re(R"(^(?:ws|http)://([A-Za-z0-9.\-]+)(?::([0-9]{1,5}))?(/[^\s?#]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re))
    throw Error(ErrorCode::PreconditionViolation, "url must be ws://host[:port][/prefix], got '" + url + "'");
  std::string prefix = m[3].matched ? m[3].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), m[2].matched ? m[2].str() : "80", prefix};
}

class Client {
 public:
  Client(const WsUrl& url, const std::string& target) : ws_(ioc_) {
    try {
      tcp::resolver resolver(ioc_);
      const auto results = resolver.resolve(url.host, url.port);
      asio::connect(ws_.next_layer(), results.begin(), results.end());
    } catch (const boost::system::system_error& ex) {
      throw Error(ErrorCode::ConnectionRefused, "cannot connect to " + url.host + ":" + url.port + ": " + ex.what());
    }
    try {
      ws_.handshake(url.host + ":" + url.port, target);
    } catch (const boost::system::system_error& ex) {
      throw Error(ErrorCode::ProtocolError, std::string("websocket handshake failed: ") + ex.what());
    }
    ws_.binary(true);
  }

  std::size_t send(const Bytes& message) {
    try {
      ws_.write(asio::buffer(message));
    } catch (const boost::system::system_error& ex) {
      throw Error(ErrorCode::ProtocolError, std::string("send failed: ") + ex.what());
    }
    return message.size();
  }

  wire::Envelope receive() {
    beast::flat_buffer buffer;
    try {
      ws_.read(buffer);
    } catch (const boost::system::system_error& ex) {
      throw Error(ErrorCode::ProtocolError, std::string("connection lost: ") + ex.what());
    }
    const auto data = buffer.cdata();
    try {
      return wire::decode({static_cast<const std::uint8_t*>(data.data()), data.size()});
    } catch (const Error& ex) {
      throw Error(ErrorCode::ProtocolError, std::string("undecodable server message: ") + ex.what());
    }
  }

  bool readable() { return ws_.next_layer().available() > 0; }

  void close() {
    beast::error_code ec;
    ws_.close(websocket::close_code::normal, ec);
  }

 private:
  asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

/// Counts an ACK; any other reply is a protocol error.
void expect_ack(const wire::Envelope& e, StreamStats& stats, const char* context) {
  if (e.type == wire::MessageType::Ack) {
    ++stats.acks_received;
    return;
  }
  if (e.type == wire::MessageType::Error)
    throw Error(ErrorCode::ProtocolError, std::string(context) + ": server error " +
                                              e.header.value("code", std::string("?")) + ": " +
                                              e.header.value("message", std::string()));
  throw Error(ErrorCode::ProtocolError,
              std::string(context) + ": unexpected " + std::string(wire::to_string(e.type)) + " from server");
}

}  // namespace

StreamStats stream_session(const StreamOptions& o) {
  store::SessionStore store(o.root);
  SessionManifest manifest;
  std::uint64_t count = 0;
  try {
    manifest = store.load_manifest(o.session_id);
    count = store.load_index(o.session_id).frame_count;
  } catch (const Error& ex) {
    throw Error(ErrorCode::LayoutError, "session '" + o.session_id + "' under " + o.root.string() + ": " + ex.what());
  }
  if (count == 0) throw Error(ErrorCode::LayoutError, "session '" + o.session_id + "' has no frames");
  if (o.stream_as) manifest.session_id = *o.stream_as;

  const auto url = parse_ws_url(o.url);
  std::string target = url.prefix + "/stream/" + manifest.session_id;
  if (o.protocol_id) target += "?protocol=" + *o.protocol_id;
  Client client(url, target);

  StreamStats stats;
  stats.bytes_sent += client.send(wire::encode(wire::MessageType::Init, manifest, {}));
  expect_ack(client.receive(), stats, "INIT");

  using Clock = std::chrono::steady_clock;
  const auto period = o.fps > 0 ? std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / o.fps))
                                : Clock::duration::zero();
  const auto start = Clock::now();
  std::optional<Clock::time_point> first_send, last_send;
  std::uint64_t pending_acks = 0;

  const std::int64_t first_ts = store.load_index(o.session_id).first_ts;
  const std::int64_t span = store.load_index(o.session_id).last_ts - first_ts + kFramePeriodNs;
  for (int pass = 0;; ++pass) {
    for (std::uint64_t i = 0; i < count; ++i) {
      store::StoredFrame raw;
      wire::FrameMeta meta;
      try {
        raw = store.load_frame_raw(o.session_id, i);
        meta = wire::parse_frame_header(raw.meta);
      } catch (const Error& ex) {
        throw Error(ErrorCode::LayoutError, ex.what());
      }
      const std::uint64_t index = pass * count + i;
      const std::int64_t ts = meta.timestamp_ns + pass * span;
      if (period != Clock::duration::zero()) std::this_thread::sleep_until(start + period * static_cast<long>(index));

      const auto now = Clock::now();
      stats.bytes_sent += client.send(
          wire::encode(wire::make_frame(index, ts, meta.pose, std::move(raw.rgb_png), std::move(raw.depth_raw))));
      if (!first_send) first_send = now;
      last_send = now;
      ++stats.frames_sent;
      ++pending_acks;
      while (pending_acks > 0 && client.readable()) {
        expect_ack(client.receive(), stats, "FRAME");
        --pending_acks;
      }
    }
    if (!o.loop || (o.max_loops > 0 && pass + 1 >= o.max_loops)) break;
  }

  for (; pending_acks > 0; --pending_acks) expect_ack(client.receive(), stats, "FRAME");
  stats.bytes_sent += client.send(wire::encode(wire::make_end()));
  expect_ack(client.receive(), stats, "END");
  client.close();

  if (stats.frames_sent > 1)
    stats.mean_interframe_ms =
        std::chrono::duration<double, std::milli>(*last_send - *first_send).count() / (stats.frames_sent - 1);
  return stats;
}

}  // namespace edgeval::simulator
