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

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "edgeval/gateway.hpp"
#include "edgeval/pipeline.hpp"
#include "edgeval/store.hpp"
#include "edgeval/wire.hpp"

namespace edgeval::orchestrator {

using SharedBytes = std::shared_ptr<const Bytes>;

/// A viewer channel. offer() must not block; it returns false when the
/// message was dropped because the subscriber is behind.
class Subscriber {
 public:
  virtual ~Subscriber() = default;
  virtual bool offer(SharedBytes message) = 0;
};

/// In-memory subscriber with a bounded buffer, for tests and tools.
class QueueSubscriber final : public Subscriber {
 public:
  explicit QueueSubscriber(std::size_t capacity = 1024) : capacity_(capacity) {}
  bool offer(SharedBytes message) override;
  /// Waits up to `timeout` for the next message.
  std::optional<SharedBytes> pop(std::chrono::milliseconds timeout);
  std::vector<SharedBytes> drain();
  std::size_t dropped() const { return dropped_; }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<SharedBytes> queue_;
  std::atomic<std::size_t> dropped_{0};
};

class SubscriberSet {
 public:
  void add(std::shared_ptr<Subscriber> s);
  void remove(const Subscriber* s);
  void broadcast(const wire::Envelope& e);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Subscriber>> subscribers_;
};

/// Single background thread draining a bounded job channel. post() blocks
/// only when the channel is full.
class StorageWorker {
 public:
  explicit StorageWorker(std::size_t capacity = 256);
  ~StorageWorker();
  StorageWorker(const StorageWorker&) = delete;
  StorageWorker& operator=(const StorageWorker&) = delete;

  void post(std::function<void()> job);
  /// Blocks until every job posted so far has run.
  void flush();
  std::size_t failures() const { return failures_; }

 private:
  void loop();

  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_empty_, not_full_, idle_;
  std::deque<std::function<void()>> jobs_;
  bool busy_ = false;
  bool stopping_ = false;
  std::atomic<std::size_t> failures_{0};
  std::thread thread_;
};

/// Persists one frame's entry outputs (results, composites, metrics).
void persist_outputs(store::SessionStore& store, const store::OutputScope& scope, const FrameOutputs& outputs);

inline constexpr std::size_t kDefaultQueueBound = 8;

struct RuntimeStats {
  std::uint64_t frames_received = 0;
  std::uint64_t frames_processed = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t outputs_emitted = 0;
};

/// A live capture session: frames are persisted by the storage worker as
/// they arrive and evaluated by the rendering worker from a bounded queue
/// that drops the oldest frame when full.
class SessionRuntime {
 public:
  SessionRuntime(store::SessionStore& store, const gateway::Gateway& gw, store::SessionHandle handle,
                 SessionManifest manifest, ExperimentProtocol protocol, std::size_t queue_bound = kDefaultQueueBound,
                 std::vector<std::filesystem::path> search_dirs = {});
  ~SessionRuntime();
  SessionRuntime(const SessionRuntime&) = delete;
  SessionRuntime& operator=(const SessionRuntime&) = delete;

  const SessionManifest& manifest() const { return manifest_; }

  /// Validates ordering and geometry synchronously, then hands the frame to
  /// both workers. Throws OutOfOrderFrame / SchemaMismatch / MalformedHeader.
  wire::FrameMeta submit_frame(const wire::Envelope& frame);

  /// Validates the command and queues it for the next processed frame, where
  /// it is also recorded in events.jsonl. Returns the applied value.
  Json control(const wire::ControlCommand& cmd);

  SubscriberSet& subscribers() { return subscribers_; }

  /// Drains the render queue and the storage channel.
  void finish();
  RuntimeStats stats() const;
  /// Renderer counters as of the last processed frame.
  render::RendererStats renderer_stats() const;

  /// Invoked on the rendering worker after each frame (tests, metrics).
  void set_frame_observer(std::function<void(const FrameOutputs&)> fn);

 private:
  struct QueuedFrame {
    Frame frame;
  };
  void render_loop();

  store::SessionStore& store_;
  SessionManifest manifest_;
  store::SessionHandle handle_;
  Pipeline pipeline_;
  std::size_t queue_bound_;
  StorageWorker storage_;
  SubscriberSet subscribers_;

  std::uint64_t next_index_ = 0;  // guarded by submit_mutex_
  std::optional<std::int64_t> last_ts_;
  std::mutex submit_mutex_;

  mutable std::mutex mutex_;
  std::condition_variable cv_, drained_;
  std::deque<QueuedFrame> queue_;
  std::vector<wire::ControlCommand> pending_controls_;
  bool in_flight_ = false;
  bool stopping_ = false;
  RuntimeStats stats_;
  render::RendererStats renderer_stats_;
  std::function<void(const FrameOutputs&)> observer_;
  std::thread worker_;
};

struct ReplayOptions {
  std::string run_id;  // empty = generated
  wire::ReplayMode mode = wire::ReplayMode::video;
  double fps = 30.0;   // video mode; <= 0 runs unpaced
  bool apply_recorded_events = true;
};

/// Re-runs a stored session under a protocol, writing outputs to
/// <session>/runs/<run_id>. Frames are never dropped.
class ReplaySession {
 public:
  ReplaySession(store::SessionStore& store, const gateway::Gateway& gw, const std::string& session_id,
                ExperimentProtocol protocol, ReplayOptions options, std::vector<std::filesystem::path> search_dirs);
  ~ReplaySession();
  ReplaySession(const ReplaySession&) = delete;
  ReplaySession& operator=(const ReplaySession&) = delete;

  const std::string& session_id() const { return session_id_; }
  const std::string& run_id() const { return options_.run_id; }
  std::uint64_t frame_count() const { return frame_count_; }
  store::OutputScope scope() const { return {session_id_, options_.run_id}; }
  SubscriberSet& subscribers() { return subscribers_; }

  /// Starts the background driver.
  void start();
  /// Processes every frame in order on the calling thread, unpaced.
  std::vector<FrameOutputs> run_all();

  /// Interactive commands apply before the next frame; replay_seek and
  /// replay_mode steer the driver. Throws OutOfRange for a bad seek.
  Json control(const wire::ControlCommand& cmd);

  /// Waits for a video-mode replay to reach the end.
  void wait();
  bool finished() const;
  void stop();

 private:
  FrameOutputs process_index(std::uint64_t index);
  void drive();

  store::SessionStore& store_;
  std::string session_id_;
  ReplayOptions options_;
  std::uint64_t frame_count_ = 0;
  std::vector<Json> events_;
  std::size_t next_event_ = 0;
  Pipeline pipeline_;
  SubscriberSet subscribers_;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::uint64_t cursor_ = 0;
  std::deque<std::uint64_t> seeks_;
  std::vector<wire::ControlCommand> pending_controls_;
  bool restart_pacing_ = true;
  bool finished_ = false;
  bool stopping_ = false;
  std::thread thread_;
};

std::string generate_run_id();

}  // namespace edgeval::orchestrator
