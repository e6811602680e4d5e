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

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/error.hpp"

namespace edgeval::gateway {

enum class TaskKind { depth, lighting };

std::string to_string(TaskKind k);

struct BuiltinBackend {
  std::string name;                // e.g. "scale"
  Json params = Json::object();    // e.g. {"k": 2.0}
};

struct RemoteBackend {
  std::string base_url;  // http://host[:port][/prefix]
};

inline constexpr int kDefaultTimeoutMs = 5000;

struct ModelDescriptor {
  std::string model_id;
  TaskKind task_kind = TaskKind::depth;
  std::variant<BuiltinBackend, RemoteBackend> backend;
  int timeout_ms = kDefaultTimeoutMs;
};

/// {"model_id", "task_kind", "backend": {"type": "builtin", "name", "params"}
///  | {"type": "remote", "base_url"}, "timeout_ms"}. Builtin names also
/// accept the call form "scale(k=2.0)" or "constant(1.0)".
ModelDescriptor parse_descriptor(const Json& j);
Json to_json(const ModelDescriptor& d);

using Prediction = std::variant<DepthMap, EnvironmentMap>;

/// In-process model interface. Depth models return uint16 millimeters at
/// their native resolution.
class Model {
 public:
  virtual ~Model() = default;
  virtual Prediction infer(const Frame& frame, const SessionManifest& manifest) = 0;
};

/// Names accepted by BuiltinBackend.
const std::vector<std::string>& builtin_names();
std::unique_ptr<Model> make_builtin(const BuiltinBackend& b, TaskKind kind);

struct InferenceResult {
  Prediction prediction;
  double latency_ms = 0.0;
};

/// Model registry and dispatcher. Registration is exclusive; infer calls may
/// run concurrently.
class Gateway {
 public:
  void register_model(const ModelDescriptor& d);
  /// Registers a caller-supplied in-process model under `d.model_id`.
  void register_model(const ModelDescriptor& d, std::shared_ptr<Model> model);

  bool has_model(const std::string& model_id) const;
  std::optional<ModelDescriptor> describe(const std::string& model_id) const;
  std::vector<ModelDescriptor> list() const;

  /// ModelTimeout after the descriptor's timeout; ModelError / SchemaMismatch
  /// on bad responses. The gateway never resizes predictions.
  InferenceResult infer(const std::string& model_id, const Frame& frame, const SessionManifest& manifest) const;

 private:
  struct Entry {
    ModelDescriptor descriptor;
    std::shared_ptr<Model> model;
  };
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> models_;
};

// Remote REST contract: POST {base_url}/infer.

Json build_infer_request(TaskKind kind, const Frame& frame, const SessionManifest& manifest);
Prediction parse_infer_response(const Json& response, TaskKind kind);

bool is_valid_base_url(const std::string& url);

}  // namespace edgeval::gateway
