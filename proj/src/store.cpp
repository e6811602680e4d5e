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

#include "edgeval/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "edgeval/codec.hpp"
#include "edgeval/wire.hpp"

namespace edgeval::store {

namespace {

Json read_json_file(const fs::path& p, ErrorCode missing) {
  std::ifstream in(p);
  if (!in) throw Error(missing, "missing " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& ex) {
    throw Error(ErrorCode::CorruptFrame, p.string() + ": " + ex.what());
  }
}

Bytes read_bytes(const fs::path& p, ErrorCode missing) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(missing, "missing " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

void check_component(const std::string& name, const char* what) {
  if (!is_safe_component(name))
    throw Error(ErrorCode::PreconditionViolation, std::string(what) + " '" + name + "' is not a valid path component");
}

}  // namespace

void to_json(Json& j, const SessionIndex& i) {
  j = Json{{"frame_count", i.frame_count}, {"first_ts", i.first_ts}, {"last_ts", i.last_ts}};
}

bool is_safe_component(std::string_view name) {
  if (name.empty() || name == "." || name == ".." || name.size() > 200) return false;
  return std::none_of(name.begin(), name.end(), [](char c) { return c == '/' || c == '\\' || c == '\0'; });
}

std::string frame_stem(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(index));
  return buf;
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {}

fs::path SessionStore::session_dir(const std::string& session_id) const { return root_ / session_id; }

fs::path SessionStore::scope_dir(const OutputScope& scope) const {
  auto dir = session_dir(scope.session_id);
  if (scope.run_id) dir = dir / "runs" / *scope.run_id;
  return dir;
}

void SessionStore::write_atomic(const fs::path& path, std::span<const std::uint8_t> data) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageUnavailable, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::StorageUnavailable, "short write to " + tmp.string());
  }
  if (fault_hook_) fault_hook_(path);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::StorageUnavailable, "rename " + tmp.string() + ": " + ec.message());
}

void SessionStore::append_line(const fs::path& path, const std::string& line) const {
  std::lock_guard lock(append_mutex_);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::StorageUnavailable, "cannot append to " + path.string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::StorageUnavailable, "short write to " + path.string());
}

void SessionStore::check_session(const std::string& session_id) const {
  if (!is_safe_component(session_id) || !fs::exists(session_dir(session_id) / "manifest.json"))
    throw Error(ErrorCode::NoSuchSession, "no session '" + session_id + "'");
}

SessionHandle SessionStore::begin_session(const SessionManifest& m) {
  check_component(m.session_id, "session_id");
  const auto dir = session_dir(m.session_id);
  std::error_code ec;
  if (fs::exists(dir, ec)) throw Error(ErrorCode::DuplicateSession, "session '" + m.session_id + "' already exists");
  fs::create_directories(dir / "frames", ec);
  if (ec) throw Error(ErrorCode::StorageUnavailable, "cannot create " + dir.string() + ": " + ec.message());

  write_atomic(dir / "manifest.json", to_bytes(Json(m).dump(2)));
  SessionHandle h;
  h.session_id_ = m.session_id;
  h.manifest_ = m;
  write_index(m.session_id, h.index_);
  return h;
}

SessionHandle SessionStore::open_session(const std::string& session_id) const {
  check_session(session_id);
  SessionHandle h;
  h.session_id_ = session_id;
  h.manifest_ = load_manifest(session_id);
  h.index_ = scan_index(session_id);
  write_index(session_id, h.index_);
  return h;
}

void SessionStore::write_index(const std::string& session_id, const SessionIndex& idx) const {
  write_atomic(session_dir(session_id) / "index.json", to_bytes(Json(idx).dump()));
}

SessionIndex SessionStore::scan_index(const std::string& session_id) const {
  const auto frames = session_dir(session_id) / "frames";
  SessionIndex idx;
  for (std::uint64_t i = 0;; ++i) {
    const auto meta_path = frames / (frame_stem(i) + ".meta.json");
    if (!fs::exists(meta_path)) break;
    const auto meta = read_json_file(meta_path, ErrorCode::CorruptFrame);
    const auto ts = meta.at("timestamp_ns").get<std::int64_t>();
    if (i == 0) idx.first_ts = ts;
    idx.last_ts = ts;
    idx.frame_count = i + 1;
  }
  return idx;
}

void SessionStore::append_frame(SessionHandle& h, const Frame& f) {
  const auto p = wire::encode_frame_payloads(f);
  append_frame_encoded(h, f.index, f.timestamp_ns, f.pose, p.rgb_png, p.depth_raw);
}

void SessionStore::append_frame_encoded(SessionHandle& h, std::uint64_t index, std::int64_t timestamp_ns,
                                        const Pose& pose, const Bytes& rgb_png, const Bytes& depth_raw) {
  if (index != h.index_.frame_count)
    throw Error(ErrorCode::OutOfOrderFrame,
                "frame " + std::to_string(index) + " appended at position " + std::to_string(h.index_.frame_count));
  if (h.index_.frame_count > 0 && timestamp_ns <= h.index_.last_ts)
    throw Error(ErrorCode::OutOfOrderFrame, "timestamps must strictly increase");
  const auto& res = h.manifest_.depth_resolution;
  if (depth_raw.size() != static_cast<std::size_t>(res.width) * res.height * 2)
    throw Error(ErrorCode::SchemaMismatch, "depth buffer does not match depth_resolution");
  try {
    (void)decode_png(rgb_png);
  } catch (const Error& ex) {
    throw Error(ErrorCode::SchemaMismatch, ex.what());
  }

  const auto frames = session_dir(h.session_id_) / "frames";
  const auto stem = frame_stem(index);
  write_atomic(frames / (stem + ".rgb.png"), rgb_png);
  write_atomic(frames / (stem + ".depth.raw16"), depth_raw);
  const Json meta{{"index", index}, {"timestamp_ns", timestamp_ns}, {"pose", pose}};
  write_atomic(frames / (stem + ".meta.json"), to_bytes(meta.dump()));

  if (h.index_.frame_count == 0) h.index_.first_ts = timestamp_ns;
  h.index_.last_ts = timestamp_ns;
  h.index_.frame_count = index + 1;
  write_index(h.session_id_, h.index_);
}

bool SessionStore::has_session(const std::string& session_id) const {
  return is_safe_component(session_id) && fs::exists(session_dir(session_id) / "manifest.json");
}

std::vector<std::string> SessionStore::list_sessions() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root_, ec))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
      out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

SessionManifest SessionStore::load_manifest(const std::string& session_id) const {
  check_session(session_id);
  return parse_manifest(read_json_file(session_dir(session_id) / "manifest.json", ErrorCode::NoSuchSession));
}

SessionIndex SessionStore::load_index(const std::string& session_id) const {
  check_session(session_id);
  const auto j = read_json_file(session_dir(session_id) / "index.json", ErrorCode::NoSuchSession);
  SessionIndex idx;
  j.at("frame_count").get_to(idx.frame_count);
  j.at("first_ts").get_to(idx.first_ts);
  j.at("last_ts").get_to(idx.last_ts);
  return idx;
}

StoredFrame SessionStore::load_frame_raw(const std::string& session_id, std::uint64_t index) const {
  const auto idx = load_index(session_id);
  if (index >= idx.frame_count)
    throw Error(ErrorCode::NoSuchFrame,
                "frame " + std::to_string(index) + " of " + std::to_string(idx.frame_count));
  const auto frames = session_dir(session_id) / "frames";
  const auto stem = frame_stem(index);
  StoredFrame sf;
  sf.meta = read_json_file(frames / (stem + ".meta.json"), ErrorCode::CorruptFrame);
  sf.rgb_png = read_bytes(frames / (stem + ".rgb.png"), ErrorCode::CorruptFrame);
  sf.depth_raw = read_bytes(frames / (stem + ".depth.raw16"), ErrorCode::CorruptFrame);
  return sf;
}

Frame SessionStore::load_frame(const std::string& session_id, std::uint64_t index) const {
  const auto manifest = load_manifest(session_id);
  auto sf = load_frame_raw(session_id, index);
  const auto& res = manifest.depth_resolution;
  if (sf.depth_raw.size() != static_cast<std::size_t>(res.width) * res.height * 2)
    throw Error(ErrorCode::CorruptFrame, "frame " + std::to_string(index) + ": depth file size mismatch");
  Frame f;
  try {
    const auto meta = wire::parse_frame_header(sf.meta);
    if (meta.index != index) throw Error(ErrorCode::CorruptFrame, "meta index mismatch");
    f.index = meta.index;
    f.timestamp_ns = meta.timestamp_ns;
    f.pose = meta.pose;
    f.rgb = decode_png(sf.rgb_png);
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::CorruptFrame) throw;
    throw Error(ErrorCode::CorruptFrame, "frame " + std::to_string(index) + ": " + ex.what());
  }
  f.depth = decode_depth_raw(sf.depth_raw, res.width, res.height);
  return f;
}

void SessionStore::store_result(const OutputScope& scope, const std::string& model_id, std::uint64_t index,
                                const DepthMap& depth) {
  check_session(scope.session_id);
  check_component(model_id, "model_id");
  const auto dir = scope_dir(scope) / "results" / model_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::StorageUnavailable, "cannot create " + dir.string());
  // Result depth may differ from the sensor resolution, so keep its geometry.
  write_atomic(dir / (frame_stem(index) + ".depth.json"),
               to_bytes(Json{{"width", depth.width}, {"height", depth.height}}.dump()));
  write_atomic(dir / (frame_stem(index) + ".depth.raw16"), encode_depth_raw(depth));
}

void SessionStore::store_result(const OutputScope& scope, const std::string& model_id, std::uint64_t index,
                                const EnvironmentMap& env) {
  check_session(scope.session_id);
  check_component(model_id, "model_id");
  const auto dir = scope_dir(scope) / "results" / model_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::StorageUnavailable, "cannot create " + dir.string());
  write_atomic(dir / (frame_stem(index) + ".env.pfm"), encode_pfm(env));
}

DepthMap SessionStore::load_depth_result(const OutputScope& scope, const std::string& model_id,
                                         std::uint64_t index) const {
  check_session(scope.session_id);
  const auto dir = scope_dir(scope) / "results" / model_id;
  if (!is_safe_component(model_id) || !fs::is_directory(dir))
    throw Error(ErrorCode::NoSuchResult, "no results for model '" + model_id + "'");
  const auto geom = read_json_file(dir / (frame_stem(index) + ".depth.json"), ErrorCode::NoSuchResult);
  const auto raw = read_bytes(dir / (frame_stem(index) + ".depth.raw16"), ErrorCode::NoSuchResult);
  const int w = geom.at("width").get<int>(), h = geom.at("height").get<int>();
  if (raw.size() != static_cast<std::size_t>(w) * h * 2)
    throw Error(ErrorCode::CorruptFrame, "result depth size mismatch");
  return decode_depth_raw(raw, w, h);
}

EnvironmentMap SessionStore::load_env_result(const OutputScope& scope, const std::string& model_id,
                                             std::uint64_t index) const {
  check_session(scope.session_id);
  const auto dir = scope_dir(scope) / "results" / model_id;
  if (!is_safe_component(model_id) || !fs::is_directory(dir))
    throw Error(ErrorCode::NoSuchResult, "no results for model '" + model_id + "'");
  return decode_pfm(read_bytes(dir / (frame_stem(index) + ".env.pfm"), ErrorCode::NoSuchResult));
}

fs::path SessionStore::composite_path(const OutputScope& scope, const std::string& model_id,
                                      const std::string& task, std::uint64_t index,
                                      const std::string& extension) const {
  return scope_dir(scope) / "composites" / model_id / task / (frame_stem(index) + extension);
}

void SessionStore::store_composite(const OutputScope& scope, const std::string& model_id, const std::string& task,
                                   std::uint64_t index, const Bytes& data, const std::string& extension) {
  check_session(scope.session_id);
  check_component(model_id, "model_id");
  check_component(task, "task");
  const auto path = composite_path(scope, model_id, task, index, extension);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::StorageUnavailable, "cannot create " + path.parent_path().string());
  write_atomic(path, data);
}

void SessionStore::append_metrics(const OutputScope& scope, const std::string& model_id,
                                  const std::vector<Json>& rows) {
  check_session(scope.session_id);
  check_component(model_id, "model_id");
  std::string text;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) text += '\n';
    text += rows[i].dump();
  }
  if (!rows.empty()) append_line(scope_dir(scope) / "metrics" / (model_id + ".jsonl"), text);
}

std::string SessionStore::read_metrics(const OutputScope& scope, const std::string& model_id) const {
  check_session(scope.session_id);
  if (!is_safe_component(model_id)) throw Error(ErrorCode::NoSuchResult, "bad model id");
  const auto bytes = read_bytes(scope_dir(scope) / "metrics" / (model_id + ".jsonl"), ErrorCode::NoSuchResult);
  return std::string(bytes.begin(), bytes.end());
}

void SessionStore::append_event(const std::string& session_id, const Json& event) {
  check_session(session_id);
  append_line(session_dir(session_id) / "events.jsonl", event.dump());
}

std::vector<Json> SessionStore::load_events(const std::string& session_id) const {
  check_session(session_id);
  std::vector<Json> out;
  std::ifstream in(session_dir(session_id) / "events.jsonl");
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(Json::parse(line));
  return out;
}

}  // namespace edgeval::store
