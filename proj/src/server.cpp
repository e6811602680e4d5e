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

#include "edgeval/server.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "edgeval/codec.hpp"
#include "edgeval/pointcloud.hpp"
#include "edgeval/render.hpp"

namespace edgeval::server {

using orchestrator::ReplayOptions;
using orchestrator::ReplaySession;
using orchestrator::SessionRuntime;

// ---------------------------------------------------------------- config

namespace {

const char* env_value(const std::function<const char*(const char*)>& getenv, const std::string& name) {
  if (const char* v = getenv(name.c_str())) return v;
  std::string upper = name;
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  return getenv(upper.c_str());
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v <= 0) throw std::invalid_argument(text);
    return static_cast<T>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::PreconditionViolation, key + " must be a positive integer, got '" + text + "'");
  }
}

}  // namespace

std::pair<std::string, std::uint16_t> split_bind_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0)
    throw Error(ErrorCode::PreconditionViolation, "bind_address must be host:port, got '" + address + "'");
  const auto port_text = address.substr(colon + 1);
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) port = -1;
  } catch (const std::exception&) {
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::PreconditionViolation, "bad port in '" + address + "'");
  return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
}

ServerConfig load_config(const std::optional<fs::path>& path,
                         const std::function<const char*(const char*)>& getenv) {
  ServerConfig c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::StorageUnavailable, "cannot read config " + path->string());
    Json j;
    try {
      j = Json::parse(in);
      c.bind_address = j.value("bind_address", c.bind_address);
      c.storage_root = j.value("storage_root", c.storage_root.string());
      c.queue_bound = j.value("queue_bound", c.queue_bound);
      c.default_timeout_ms = j.value("default_timeout_ms", c.default_timeout_ms);
      if (j.contains("static_root")) c.static_root = j.at("static_root").get<std::string>();
      c.models = j.value("models", Json::array());
      c.protocols = j.value("protocols", Json::array());
    } catch (const Json::exception& ex) {
      throw Error(ErrorCode::MalformedHeader, "config " + path->string() + ": " + ex.what());
    }
  }
  if (const char* v = env_value(getenv, "bind_address")) c.bind_address = v;
  if (const char* v = env_value(getenv, "storage_root")) c.storage_root = v;
  if (const char* v = env_value(getenv, "queue_bound")) c.queue_bound = parse_number<std::size_t>("queue_bound", v);
  if (const char* v = env_value(getenv, "default_timeout_ms"))
    c.default_timeout_ms = parse_number<int>("default_timeout_ms", v);
  if (const char* v = env_value(getenv, "static_root")) c.static_root = fs::path(v);
  split_bind_address(c.bind_address);
  if (c.queue_bound < 1) throw Error(ErrorCode::PreconditionViolation, "queue_bound must be >= 1");
  if (c.default_timeout_ms < 1) throw Error(ErrorCode::PreconditionViolation, "default_timeout_ms must be >= 1");
  return c;
}

// ---------------------------------------------------------------- context

ServerContext::ServerContext(ServerConfig config) : config_(std::move(config)), store_(config_.storage_root) {
  for (const auto& m : config_.models) register_model(m);
  for (const auto& p : config_.protocols) register_protocol(p);
}

gateway::ModelDescriptor ServerContext::register_model(const Json& descriptor) {
  auto d = gateway::parse_descriptor(descriptor);
  if (!descriptor.contains("timeout_ms")) d.timeout_ms = config_.default_timeout_ms;
  gateway_.register_model(d);
  spdlog::info("registered model {} ({})", d.model_id, gateway::to_string(d.task_kind));
  return d;
}

ExperimentProtocol ServerContext::register_protocol(const Json& protocol) {
  auto p = parse_protocol(protocol);
  orchestrator::validate_protocol(p, gateway_);
  std::lock_guard lock(mutex_);
  if (protocols_.count(p.protocol_id))
    throw Error(ErrorCode::PreconditionViolation, "protocol '" + p.protocol_id + "' already exists");
  protocols_.emplace(p.protocol_id, p);
  return p;
}

ExperimentProtocol ServerContext::find_protocol(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = protocols_.find(id);
  if (it == protocols_.end()) throw Error(ErrorCode::UnknownProtocol, "no protocol '" + id + "'");
  return it->second;
}

std::vector<ExperimentProtocol> ServerContext::protocols() const {
  std::lock_guard lock(mutex_);
  std::vector<ExperimentProtocol> out;
  for (const auto& [id, p] : protocols_) out.push_back(p);
  return out;
}

std::vector<fs::path> ServerContext::search_dirs(const std::string& session_id) const {
  return {store_.session_dir(session_id), config_.storage_root / "assets"};
}

std::shared_ptr<SessionRuntime> ServerContext::create_live(const SessionManifest& m,
                                                           const std::optional<std::string>& protocol_id) {
  if (const auto v = validate_manifest(m); !v) throw Error(ErrorCode::InvalidManifest, v.message);
  ExperimentProtocol protocol{"", {}};
  if (protocol_id) protocol = find_protocol(*protocol_id);
  const auto dirs = search_dirs(m.session_id);
  for (const auto& o : m.objects)
    if (!o.is_plane()) render::resolve_mesh_path(o.mesh_ref, dirs);

  std::lock_guard lock(mutex_);
  if (live_.count(m.session_id)) throw Error(ErrorCode::DuplicateSession, "session '" + m.session_id + "' is live");
  auto handle = store_.begin_session(m);
  auto rt = std::make_shared<SessionRuntime>(store_, gateway_, std::move(handle), m, std::move(protocol),
                                             config_.queue_bound, dirs);
  live_[m.session_id] = rt;
  if (const auto it = viewers_.find(m.session_id); it != viewers_.end())
    for (const auto& v : it->second) rt->subscribers().add(v);
  spdlog::info("session {} started", m.session_id);
  return rt;
}

std::shared_ptr<SessionRuntime> ServerContext::live(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = live_.find(session_id);
  return it == live_.end() ? nullptr : it->second;
}

std::optional<orchestrator::RuntimeStats> ServerContext::end_live(const std::string& session_id) {
  std::shared_ptr<SessionRuntime> rt;
  {
    std::lock_guard lock(mutex_);
    const auto it = live_.find(session_id);
    if (it == live_.end()) return std::nullopt;
    rt = it->second;
    live_.erase(it);
  }
  rt->finish();
  const auto stats = rt->stats();
  spdlog::info("session {} ended: {} received, {} processed, {} dropped", session_id, stats.frames_received,
               stats.frames_processed, stats.frames_dropped);
  return stats;
}

std::shared_ptr<ReplaySession> ServerContext::start_replay(const std::string& session_id,
                                                           const std::string& protocol_id, ReplayOptions options,
                                                           bool autostart) {
  if (!store_.has_session(session_id)) throw Error(ErrorCode::NoSuchSession, "no session '" + session_id + "'");
  auto protocol = find_protocol(protocol_id);
  {
    std::lock_guard lock(mutex_);
    if (live_.count(session_id))
      throw Error(ErrorCode::PreconditionViolation, "session '" + session_id + "' is still capturing");
    if (const auto it = replays_.find(session_id); it != replays_.end() && !it->second->finished())
      throw Error(ErrorCode::PreconditionViolation, "a replay of '" + session_id + "' is already running");
  }
  auto replay = std::make_shared<ReplaySession>(store_, gateway_, session_id, std::move(protocol), std::move(options),
                                                search_dirs(session_id));
  std::shared_ptr<ReplaySession> previous;
  {
    std::lock_guard lock(mutex_);
    auto& slot = replays_[session_id];
    previous = std::move(slot);
    slot = replay;
    if (const auto it = viewers_.find(session_id); it != viewers_.end())
      for (const auto& v : it->second) replay->subscribers().add(v);
  }
  if (previous) previous->stop();
  if (autostart) replay->start();
  spdlog::info("replay {} of {} started", replay->run_id(), session_id);
  return replay;
}

std::shared_ptr<ReplaySession> ServerContext::replay(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = replays_.find(session_id);
  return it == replays_.end() ? nullptr : it->second;
}

void ServerContext::add_viewer(const std::string& session_id, std::shared_ptr<orchestrator::Subscriber> s) {
  std::lock_guard lock(mutex_);
  if (const auto it = live_.find(session_id); it != live_.end()) it->second->subscribers().add(s);
  if (const auto it = replays_.find(session_id); it != replays_.end()) it->second->subscribers().add(s);
  viewers_[session_id].push_back(std::move(s));
}

void ServerContext::remove_viewer(const std::string& session_id, const orchestrator::Subscriber* s) {
  std::lock_guard lock(mutex_);
  if (const auto it = live_.find(session_id); it != live_.end()) it->second->subscribers().remove(s);
  if (const auto it = replays_.find(session_id); it != replays_.end()) it->second->subscribers().remove(s);
  if (const auto it = viewers_.find(session_id); it != viewers_.end()) {
    std::erase_if(it->second, [&](const auto& v) { return v.get() == s; });
    if (it->second.empty()) viewers_.erase(it);
  }
}

void ServerContext::shutdown() {
  std::vector<std::string> ids;
  std::map<std::string, std::shared_ptr<ReplaySession>> replays;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, rt] : live_) ids.push_back(id);
    replays.swap(replays_);
  }
  for (const auto& id : ids) end_live(id);
  for (auto& [id, r] : replays) r->stop();
}

// ---------------------------------------------------------------- REST

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoSuchSession:
    case ErrorCode::NoSuchFrame:
    case ErrorCode::NoSuchResult:
    case ErrorCode::UnknownModel:
    case ErrorCode::UnknownProtocol:
      return 404;
    case ErrorCode::DuplicateSession:
    case ErrorCode::DuplicateModel:
    case ErrorCode::PreconditionViolation:
    case ErrorCode::EmptySession:
      return 409;
    case ErrorCode::ModelTimeout:
      return 504;
    case ErrorCode::ModelError:
      return 502;
    case ErrorCode::StorageUnavailable:
      return 503;
    case ErrorCode::CorruptFrame:
      return 500;
    default:
      return 400;
  }
}

namespace {

HttpResponse json_response(int status, const Json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(ErrorCode code, const std::string& message, Json extra = Json::object()) {
  extra["code"] = to_string(code);
  extra["message"] = message;
  return json_response(http_status(code), extra);
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size() && hex_digit(s[i + 1]) >= 0 && hex_digit(s[i + 2]) >= 0) {
      out += static_cast<char>(hex_digit(s[i + 1]) * 16 + hex_digit(s[i + 2]));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

struct Target {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;
};

Target parse_target(const std::string& target) {
  Target t;
  const auto q = target.find('?');
  const std::string path = target.substr(0, q);
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const auto next = path.find('/', pos);
    const auto seg = path.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!seg.empty()) t.segments.push_back(url_decode(seg));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (q != std::string::npos) {
    std::string_view rest(target);
    rest.remove_prefix(q + 1);
    while (!rest.empty()) {
      const auto amp = rest.find('&');
      const auto pair = rest.substr(0, amp);
      const auto eq = pair.find('=');
      if (eq == std::string_view::npos)
        t.query[url_decode(pair)] = "";
      else
        t.query[url_decode(pair.substr(0, eq))] = url_decode(pair.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      rest.remove_prefix(amp + 1);
    }
  }
  return t;
}

std::uint64_t parse_index(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size() || text.front() == '-') throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::OutOfRange, "bad frame index '" + text + "'");
  }
}

Json parse_body(const std::string& body) {
  try {
    return Json::parse(body);
  } catch (const Json::exception& ex) {
    throw Error(ErrorCode::MalformedHeader, std::string("request body: ") + ex.what());
  }
}

std::string content_type_for(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

HttpResponse serve_static(const ServerContext& ctx, const Target& t) {
  if (!ctx.config().static_root) return error_response(ErrorCode::NoSuchResult, "not found");
  fs::path rel;
  for (const auto& s : t.segments) {
    if (!store::is_safe_component(s)) return error_response(ErrorCode::NoSuchResult, "not found");
    rel /= s;
  }
  auto path = *ctx.config().static_root / rel;
  if (fs::is_directory(path)) path /= "index.html";
  if (!fs::is_regular_file(path)) return error_response(ErrorCode::NoSuchResult, "not found");
  const auto bytes = read_file(path.string());
  return {200, content_type_for(path), std::string(bytes.begin(), bytes.end())};
}

Json session_summary(ServerContext& ctx, const std::string& id) {
  const auto index = ctx.store().load_index(id);
  Json j{{"session_id", id}, {"frame_count", index.frame_count}, {"live", ctx.live(id) != nullptr}};
  if (const auto r = ctx.replay(id)) j["replay"] = {{"run_id", r->run_id()}, {"finished", r->finished()}};
  return j;
}

HttpResponse route_session(ServerContext& ctx, const HttpRequest& req, const Target& t) {
  const auto& seg = t.segments;
  const std::string& id = seg[1];
  if (!store::is_safe_component(id) || !ctx.store().has_session(id))
    return error_response(ErrorCode::NoSuchSession, "no session '" + id + "'");
  auto& store = ctx.store();

  if (seg.size() == 2 && req.method == "GET") {
    auto j = session_summary(ctx, id);
    j["manifest"] = store.load_manifest(id);
    j["index"] = store.load_index(id);
    return json_response(200, j);
  }
  if (seg.size() == 4 && seg[2] == "frames" && req.method == "GET") {
    const auto index = parse_index(seg[3]);
    const auto raw = store.load_frame_raw(id, index);
    const auto m = store.load_manifest(id);
    Json j = raw.meta;
    j["rgb"] = wire::encode_rest_image(raw.rgb_png);
    j["depth"] = wire::encode_rest_image(raw.depth_raw);
    j["depth_width"] = m.depth_resolution.width;
    j["depth_height"] = m.depth_resolution.height;
    return json_response(200, j);
  }
  if (seg.size() == 3 && seg[2] == "metrics" && req.method == "GET") {
    const auto model = t.query.find("model");
    if (model == t.query.end() || model->second.empty())
      return error_response(ErrorCode::PreconditionViolation, "query parameter 'model' is required");
    if (!store::is_safe_component(model->second))
      return error_response(ErrorCode::NoSuchResult, "no metrics for '" + model->second + "'");
    store::OutputScope scope{id, std::nullopt};
    if (const auto run = t.query.find("run"); run != t.query.end() && !run->second.empty()) {
      if (!store::is_safe_component(run->second))
        return error_response(ErrorCode::NoSuchResult, "no run '" + run->second + "'");
      scope.run_id = run->second;
    }
    return {200, "application/x-ndjson", store.read_metrics(scope, model->second)};
  }
  if (seg.size() == 4 && seg[2] == "pointcloud" && req.method == "GET") {
    const auto index = parse_index(seg[3]);
    const auto frame = store.load_frame(id, index);
    int stride = pointcloud::kDefaultStride;
    if (const auto s = t.query.find("stride"); s != t.query.end()) stride = static_cast<int>(parse_index(s->second));
    const auto manifest = store.load_manifest(id);
    orchestrator::Pipeline pipeline(manifest, ctx.gateway(), {}, ctx.search_dirs(id));
    DepthMap depth = frame.depth;
    if (const auto m = t.query.find("model"); m != t.query.end() && !m->second.empty()) {
      auto pred = ctx.gateway().infer(m->second, frame, manifest).prediction;
      if (!std::holds_alternative<DepthMap>(pred))
        return error_response(ErrorCode::SchemaMismatch, "model '" + m->second + "' is not a depth model");
      depth = std::get<DepthMap>(std::move(pred));
    }
    const auto pcd = pipeline.point_cloud(frame, depth, stride);
    return {200, "application/octet-stream", std::string(pcd.begin(), pcd.end())};
  }
  if (seg.size() == 3 && seg[2] == "events" && req.method == "GET")
    return json_response(200, store.load_events(id));
  if (seg.size() == 3 && seg[2] == "replay" && req.method == "POST") {
    const auto body = parse_body(req.body.empty() ? "{}" : req.body);
    ReplayOptions o;
    std::string protocol_id;
    try {
      protocol_id = body.at("protocol_id").get<std::string>();
      o.run_id = body.value("run_id", std::string());
      const auto mode = body.value("mode", std::string("video"));
      const auto parsed = wire::parse_replay_mode(mode);
      if (!parsed) throw Error(ErrorCode::PreconditionViolation, "mode must be video or frame_by_frame");
      o.mode = *parsed;
      o.fps = body.value("fps", 30.0);
      o.apply_recorded_events = body.value("apply_recorded_events", true);
    } catch (const Json::exception& ex) {
      throw Error(ErrorCode::MalformedHeader, std::string("replay request: ") + ex.what());
    }
    const auto r = ctx.start_replay(id, protocol_id, o);
    return json_response(202, {{"session_id", id}, {"run_id", r->run_id()}, {"frame_count", r->frame_count()},
                               {"mode", wire::to_string(o.mode)}});
  }
  if (seg.size() == 3 && seg[2] == "control" && req.method == "POST") {
    const auto cmd = wire::parse_control(parse_body(req.body));
    if (wire::control_session(cmd) != id)
      return error_response(ErrorCode::PreconditionViolation, "command session_id does not match the URL");
    const bool replay_cmd =
        std::holds_alternative<wire::ReplaySeek>(cmd) || std::holds_alternative<wire::ReplayModeCmd>(cmd);
    Json applied;
    if (const auto live = ctx.live(id); live && !replay_cmd)
      applied = live->control(cmd);
    else if (const auto r = ctx.replay(id))
      applied = r->control(cmd);
    else
      return error_response(ErrorCode::PreconditionViolation, "session '" + id + "' has no active runtime");
    return json_response(200, {{"control", wire::control_name(cmd)}, {"applied", applied}});
  }
  return error_response(ErrorCode::NoSuchResult, "no route for " + req.method + " " + req.target);
}

HttpResponse route(ServerContext& ctx, const HttpRequest& req) {
  const auto t = parse_target(req.target);
  const auto& seg = t.segments;
  if (seg.empty() || (seg[0] != "sessions" && seg[0] != "models" && seg[0] != "protocols" && seg[0] != "health")) {
    if (req.method == "GET") return serve_static(ctx, t);
    return error_response(ErrorCode::NoSuchResult, "no route for " + req.method + " " + req.target);
  }
  if (seg[0] == "health") return json_response(200, {{"status", "ok"}});

  if (seg[0] == "sessions") {
    if (seg.size() == 1 && req.method == "GET") {
      Json list = Json::array();
      for (const auto& id : ctx.store().list_sessions()) list.push_back(session_summary(ctx, id));
      return json_response(200, list);
    }
    if (seg.size() == 1 && req.method == "POST") {
      const auto body = parse_body(req.body);
      const auto m = parse_manifest(body);
      if (const auto v = validate_manifest(m); !v)
        return error_response(ErrorCode::InvalidManifest, v.message, {{"field", v.field}});
      std::optional<std::string> protocol;
      if (const auto p = t.query.find("protocol"); p != t.query.end() && !p->second.empty()) protocol = p->second;
      ctx.create_live(m, protocol);
      return json_response(201, {{"session_id", m.session_id}});
    }
    if (seg.size() >= 2) return route_session(ctx, req, t);
  }

  if (seg[0] == "models" && seg.size() == 1) {
    if (req.method == "POST") return json_response(201, gateway::to_json(ctx.register_model(parse_body(req.body))));
    if (req.method == "GET") {
      Json list = Json::array();
      for (const auto& d : ctx.gateway().list()) list.push_back(gateway::to_json(d));
      return json_response(200, list);
    }
  }

  if (seg[0] == "protocols" && seg.size() == 1) {
    if (req.method == "POST") return json_response(201, ctx.register_protocol(parse_body(req.body)));
    if (req.method == "GET") return json_response(200, ctx.protocols());
  }
  return error_response(ErrorCode::NoSuchResult, "no route for " + req.method + " " + req.target);
}

}  // namespace

HttpResponse handle_http(ServerContext& ctx, const HttpRequest& req) {
  try {
    return route(ctx, req);
  } catch (const Error& ex) {
    return error_response(ex.code(), ex.what());
  } catch (const std::exception& ex) {
    spdlog::error("{} {}: {}", req.method, req.target, ex.what());
    return json_response(500, {{"code", "InternalError"}, {"message", ex.what()}});
  }
}

// ---------------------------------------------------------------- stream

StreamEndpoint::StreamEndpoint(ServerContext& ctx, std::string session_id, std::optional<std::string> protocol_id,
                               std::shared_ptr<orchestrator::Subscriber> sink, bool subscribe_on_capture)
    : ctx_(ctx),
      session_id_(std::move(session_id)),
      protocol_id_(std::move(protocol_id)),
      sink_(std::move(sink)),
      subscribe_on_capture_(subscribe_on_capture) {
  attach_viewer();
}

StreamEndpoint::~StreamEndpoint() { detach_viewer(); }

void StreamEndpoint::attach_viewer() {
  if (sink_ && !viewing_) {
    ctx_.add_viewer(session_id_, sink_);
    viewing_ = true;
  }
}

void StreamEndpoint::detach_viewer() {
  if (sink_ && viewing_) {
    ctx_.remove_viewer(session_id_, sink_.get());
    viewing_ = false;
  }
}

std::vector<Bytes> StreamEndpoint::on_message(std::span<const std::uint8_t> message) {
  wire::Envelope env;
  try {
    env = wire::decode(message);
  } catch (const Error& ex) {
    return {wire::encode(wire::make_error(ex.code(), ex.what()))};
  }
  try {
    return handle(env);
  } catch (const Error& ex) {
    Json extra = Json::object();
    if (env.type == wire::MessageType::Frame && env.header.contains("index")) extra["frame_index"] = env.header["index"];
    return {wire::encode(wire::make_error(ex.code(), ex.what(), extra))};
  }
}

std::vector<Bytes> StreamEndpoint::handle(const wire::Envelope& env) {
  switch (env.type) {
    case wire::MessageType::Init: {
      if (is_capture_) throw Error(ErrorCode::PreconditionViolation, "INIT already received on this connection");
      SessionManifest m;
      try {
        m = parse_manifest(env.header);
      } catch (const Error& ex) {
        throw Error(ErrorCode::InvalidManifest, ex.what());
      }
      if (const auto v = validate_manifest(m); !v)
        return {wire::encode(wire::make_error(ErrorCode::InvalidManifest, v.message, {{"field", v.field}}))};
      if (m.session_id != session_id_)
        throw Error(ErrorCode::PreconditionViolation,
                    "manifest session_id '" + m.session_id + "' does not match stream '" + session_id_ + "'");
      if (ctx_.store().has_session(session_id_))
        throw Error(ErrorCode::DuplicateSession, "session '" + session_id_ + "' already exists");
      detach_viewer();
      try {
        ctx_.create_live(m, protocol_id_);
      } catch (...) {
        attach_viewer();
        throw;
      }
      is_capture_ = true;
      if (subscribe_on_capture_) attach_viewer();
      return {wire::encode(wire::make_ack({{"session_id", session_id_},
                                           {"status", "initialized"},
                                           {"protocol_id", protocol_id_ ? Json(*protocol_id_) : Json(nullptr)}}))};
    }
    case wire::MessageType::Frame: {
      const auto rt = ctx_.live(session_id_);
      if (!rt) throw Error(ErrorCode::NoSuchSession, "session '" + session_id_ + "' is not capturing");
      const auto meta = rt->submit_frame(env);
      return {wire::encode(wire::make_ack({{"frame_index", meta.index}}))};
    }
    case wire::MessageType::Control: {
      const auto cmd = wire::parse_control(env.header);
      if (wire::control_session(cmd) != session_id_)
        throw Error(ErrorCode::PreconditionViolation, "command session_id does not match the stream");
      const bool replay_cmd =
          std::holds_alternative<wire::ReplaySeek>(cmd) || std::holds_alternative<wire::ReplayModeCmd>(cmd);
      Json applied;
      if (const auto live = ctx_.live(session_id_); live && !replay_cmd) {
        applied = live->control(cmd);
      } else {
        auto r = ctx_.replay(session_id_);
        if (const auto* m = std::get_if<wire::ReplayModeCmd>(&cmd); m && (!r || r->finished())) {
          if (!protocol_id_) throw Error(ErrorCode::UnknownProtocol, "connect with ?protocol=ID to start a replay");
          ReplayOptions o;
          o.mode = m->mode;
          o.fps = m->fps;
          r = ctx_.start_replay(session_id_, *protocol_id_, o);
          applied = wire::control_to_json(cmd);
        } else {
          if (!r) throw Error(ErrorCode::PreconditionViolation, "session '" + session_id_ + "' has no active runtime");
          applied = r->control(cmd);
        }
      }
      return {wire::encode(wire::make_ack({{"control", wire::control_name(cmd)}, {"applied", applied}}))};
    }
    case wire::MessageType::End: {
      if (is_capture_ && !ended_) {
        ended_ = true;
        const auto stats = ctx_.end_live(session_id_);
        Json h{{"session_id", session_id_}, {"status", "ended"}};
        if (stats) {
          h["frames_received"] = stats->frames_received;
          h["frames_processed"] = stats->frames_processed;
          h["frames_dropped"] = stats->frames_dropped;
        }
        return {wire::encode(wire::make_ack(h))};
      }
      close_ = true;
      return {wire::encode(wire::make_ack({{"session_id", session_id_}, {"status", "closed"}}))};
    }
    default:
      throw Error(ErrorCode::PreconditionViolation,
                  std::string(wire::to_string(env.type)) + " is a server-to-client message");
  }
}

void StreamEndpoint::on_close() {
  detach_viewer();
  if (is_capture_ && !ended_) {
    ended_ = true;
    ctx_.end_live(session_id_);
  }
}

}  // namespace edgeval::server
