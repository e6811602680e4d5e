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

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/error.hpp"

namespace edgeval::store {

namespace fs = std::filesystem;

// On-disk layout, relative to the store root:
//
//   <session_id>/manifest.json
//   <session_id>/index.json                       {frame_count, first_ts, last_ts}
//   <session_id>/events.jsonl                     interactive-state changes
//   <session_id>/frames/%06d.rgb.png
//   <session_id>/frames/%06d.depth.raw16
//   <session_id>/frames/%06d.meta.json            {index, timestamp_ns, pose}
//   <scope>/results/<model_id>/%06d.depth.raw16 | %06d.env.pfm
//   <scope>/composites/<model_id>/<task>/%06d.png (or .pcd for point clouds)
//   <scope>/metrics/<model_id>.jsonl
//
// <scope> is the session directory for live capture, or
// <session_id>/runs/<run_id> for a replay run.
//
// A frame is committed when its meta.json is renamed into place; rgb and
// depth files are renamed first, so a crash at any point leaves either a
// committed frame or an uncommitted one that the next append overwrites.

struct SessionIndex {
  std::uint64_t frame_count = 0;
  std::int64_t first_ts = 0;
  std::int64_t last_ts = 0;
};

void to_json(Json& j, const SessionIndex& i);

class SessionHandle {
 public:
  const std::string& session_id() const { return session_id_; }
  const SessionIndex& index() const { return index_; }
  std::uint64_t frame_count() const { return index_.frame_count; }

 private:
  friend class SessionStore;
  std::string session_id_;
  SessionManifest manifest_;
  SessionIndex index_;
};

/// Where derived outputs for a session go.
struct OutputScope {
  std::string session_id;
  std::optional<std::string> run_id;  // nullopt = live capture outputs
};

/// Raw bytes of one stored frame, exactly as appended.
struct StoredFrame {
  Bytes rgb_png;
  Bytes depth_raw;
  Json meta;
};

enum class ResultKind { depth, env_map };

/// Test seam: invoked after a temp file is fully written, before rename.
using FaultHook = std::function<void(const fs::path& final_path)>;

class SessionStore {
 public:
  explicit SessionStore(fs::path root);

  const fs::path& root() const { return root_; }
  fs::path session_dir(const std::string& session_id) const;
  fs::path scope_dir(const OutputScope& scope) const;

  SessionHandle begin_session(const SessionManifest& m);
  /// Reopens an existing session for appending (after restart or crash).
  SessionHandle open_session(const std::string& session_id) const;

  void append_frame(SessionHandle& h, const Frame& f);
  /// Appends pre-encoded payloads byte-for-byte; validates that they decode.
  void append_frame_encoded(SessionHandle& h, std::uint64_t index, std::int64_t timestamp_ns,
                            const Pose& pose, const Bytes& rgb_png, const Bytes& depth_raw);

  bool has_session(const std::string& session_id) const;
  std::vector<std::string> list_sessions() const;
  SessionManifest load_manifest(const std::string& session_id) const;
  SessionIndex load_index(const std::string& session_id) const;

  Frame load_frame(const std::string& session_id, std::uint64_t index) const;
  StoredFrame load_frame_raw(const std::string& session_id, std::uint64_t index) const;

  void store_result(const OutputScope& scope, const std::string& model_id, std::uint64_t index,
                    const DepthMap& depth);
  void store_result(const OutputScope& scope, const std::string& model_id, std::uint64_t index,
                    const EnvironmentMap& env);
  DepthMap load_depth_result(const OutputScope& scope, const std::string& model_id, std::uint64_t index) const;
  EnvironmentMap load_env_result(const OutputScope& scope, const std::string& model_id, std::uint64_t index) const;

  /// `extension` includes the dot, e.g. ".png" or ".pcd".
  void store_composite(const OutputScope& scope, const std::string& model_id, const std::string& task,
                       std::uint64_t index, const Bytes& data, const std::string& extension = ".png");
  fs::path composite_path(const OutputScope& scope, const std::string& model_id, const std::string& task,
                          std::uint64_t index, const std::string& extension = ".png") const;

  void append_metrics(const OutputScope& scope, const std::string& model_id, const std::vector<Json>& rows);
  /// Whole JSONL file; NoSuchResult when the model has no metrics yet.
  std::string read_metrics(const OutputScope& scope, const std::string& model_id) const;

  void append_event(const std::string& session_id, const Json& event);
  std::vector<Json> load_events(const std::string& session_id) const;

  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

 private:
  void write_atomic(const fs::path& path, std::span<const std::uint8_t> data) const;
  void append_line(const fs::path& path, const std::string& line) const;
  void write_index(const std::string& session_id, const SessionIndex& idx) const;
  SessionIndex scan_index(const std::string& session_id) const;
  void check_session(const std::string& session_id) const;

  fs::path root_;
  FaultHook fault_hook_;
  mutable std::mutex append_mutex_;  // serializes JSONL appends
};

/// Names usable as a single path component (model ids, run ids, tasks).
bool is_safe_component(std::string_view name);

std::string frame_stem(std::uint64_t index);  // "%06d"

}  // namespace edgeval::store
