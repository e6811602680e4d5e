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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "edgeval/gateway.hpp"
#include "edgeval/runtime.hpp"
#include "edgeval/store.hpp"

namespace edgeval::server {

namespace fs = std::filesystem;

struct ServerConfig {
  std::string bind_address = "127.0.0.1:8080";  // host:port; port 0 picks a free one
  fs::path storage_root = "edgeval-data";
  std::size_t queue_bound = orchestrator::kDefaultQueueBound;
  int default_timeout_ms = gateway::kDefaultTimeoutMs;
  std::optional<fs::path> static_root;  // served at "/" when set
  Json models = Json::array();          // ModelDescriptors registered at startup
  Json protocols = Json::array();       // ExperimentProtocols registered at startup
};

/// Reads `path` (JSON) if given, then applies environment overrides for
/// bind_address, storage_root, queue_bound, default_timeout_ms and
/// static_root, matched by exact or upper-case name. `getenv` is injectable.
ServerConfig load_config(const std::optional<fs::path>& path,
                         const std::function<const char*(const char*)>& getenv = ::getenv);

std::pair<std::string, std::uint16_t> split_bind_address(const std::string& address);

/// Shared server state: store, model registry, protocols and the active
/// runtime (live or replay) per session.
class ServerContext {
 public:
  explicit ServerContext(ServerConfig config);

  const ServerConfig& config() const { return config_; }
  store::SessionStore& store() { return store_; }
  gateway::Gateway& gateway() { return gateway_; }

  /// Applies the config-level default timeout when the JSON omits one.
  gateway::ModelDescriptor register_model(const Json& descriptor);
  /// Throws InvalidProtocol / UnknownModel / PreconditionViolation (duplicate).
  ExperimentProtocol register_protocol(const Json& protocol);
  ExperimentProtocol find_protocol(const std::string& id) const;  // UnknownProtocol
  std::vector<ExperimentProtocol> protocols() const;

  /// Begins a session in the store and starts its live runtime.
  std::shared_ptr<orchestrator::SessionRuntime> create_live(const SessionManifest& m,
                                                            const std::optional<std::string>& protocol_id);
  std::shared_ptr<orchestrator::SessionRuntime> live(const std::string& session_id) const;
  /// Drains and detaches the live runtime; returns its final stats.
  std::optional<orchestrator::RuntimeStats> end_live(const std::string& session_id);

  /// Starts a background replay (replacing a finished one).
  std::shared_ptr<orchestrator::ReplaySession> start_replay(const std::string& session_id,
                                                            const std::string& protocol_id,
                                                            orchestrator::ReplayOptions options, bool autostart = true);
  std::shared_ptr<orchestrator::ReplaySession> replay(const std::string& session_id) const;

  std::vector<fs::path> search_dirs(const std::string& session_id) const;

  /// Viewers receive outputs of whichever runtime is active for the
  /// session, including ones started after they connected.
  void add_viewer(const std::string& session_id, std::shared_ptr<orchestrator::Subscriber> s);
  void remove_viewer(const std::string& session_id, const orchestrator::Subscriber* s);

  /// Stops every runtime; used on shutdown.
  void shutdown();

 private:
  ServerConfig config_;
  store::SessionStore store_;
  gateway::Gateway gateway_;
  mutable std::mutex mutex_;
  std::map<std::string, ExperimentProtocol> protocols_;
  std::map<std::string, std::shared_ptr<orchestrator::SessionRuntime>> live_;
  std::map<std::string, std::shared_ptr<orchestrator::ReplaySession>> replays_;
  std::map<std::string, std::vector<std::shared_ptr<orchestrator::Subscriber>>> viewers_;
};

// ---------------------------------------------------------------- REST

struct HttpRequest {
  std::string method;
  std::string target;  // path plus optional query
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Status for an error code: 404 for missing things, 409 for conflicts,
/// 504 for timeouts, 400 otherwise.
int http_status(ErrorCode code);

/// Routes one REST request. Never throws.
HttpResponse handle_http(ServerContext& ctx, const HttpRequest& req);

// ---------------------------------------------------------------- stream

/// Transport-independent state of one WS /stream/{id} connection. The
/// transport feeds inbound binary messages to on_message and sends back the
/// returned replies; subscribed viewers receive broadcasts through `sink`.
class StreamEndpoint {
 public:
  StreamEndpoint(ServerContext& ctx, std::string session_id, std::optional<std::string> protocol_id,
                 std::shared_ptr<orchestrator::Subscriber> sink, bool subscribe_on_capture = false);
  ~StreamEndpoint();

  std::vector<Bytes> on_message(std::span<const std::uint8_t> message);
  /// Connection closed; a capture connection that never sent END is ended.
  void on_close();
  bool wants_close() const { return close_; }

 private:
  std::vector<Bytes> handle(const wire::Envelope& env);
  void attach_viewer();
  void detach_viewer();

  ServerContext& ctx_;
  std::string session_id_;
  std::optional<std::string> protocol_id_;
  std::shared_ptr<orchestrator::Subscriber> sink_;
  bool subscribe_on_capture_;
  bool is_capture_ = false;
  bool ended_ = false;
  bool close_ = false;
  bool viewing_ = false;
};

// ---------------------------------------------------------------- transport

/// HTTP + WebSocket listener on top of ServerContext.
class Server {
 public:
  explicit Server(ServerContext& ctx, int threads = 4);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving; returns the bound port.
  std::uint16_t start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServerContext& ctx_;
  int threads_;
  std::uint16_t port_ = 0;
};

}  // namespace edgeval::server
