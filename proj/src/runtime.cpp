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

#include "edgeval/runtime.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <random>

#include "edgeval/codec.hpp"

namespace edgeval::orchestrator {

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------- subscribers

bool QueueSubscriber::offer(SharedBytes message) {
  {
    std::lock_guard lock(mutex_);
    if (queue_.size() >= capacity_) {
      ++dropped_;
      return false;
    }
    queue_.push_back(std::move(message));
  }
  cv_.notify_one();
  return true;
}

std::optional<SharedBytes> QueueSubscriber::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty(); })) return std::nullopt;
  auto m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

std::vector<SharedBytes> QueueSubscriber::drain() {
  std::lock_guard lock(mutex_);
  std::vector<SharedBytes> out(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
  queue_.clear();
  return out;
}

void SubscriberSet::add(std::shared_ptr<Subscriber> s) {
  std::lock_guard lock(mutex_);
  subscribers_.push_back(std::move(s));
}

void SubscriberSet::remove(const Subscriber* s) {
  std::lock_guard lock(mutex_);
  std::erase_if(subscribers_, [&](const auto& p) { return p.get() == s; });
}

void SubscriberSet::broadcast(const wire::Envelope& e) {
  std::vector<std::shared_ptr<Subscriber>> targets;
  {
    std::lock_guard lock(mutex_);
    if (subscribers_.empty()) return;
    targets = subscribers_;
  }
  const auto bytes = std::make_shared<const Bytes>(wire::encode(e));
  for (const auto& s : targets) s->offer(bytes);
}

std::size_t SubscriberSet::size() const {
  std::lock_guard lock(mutex_);
  return subscribers_.size();
}

// ---------------------------------------------------------------- storage worker

StorageWorker::StorageWorker(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {
  thread_ = std::thread([this] { loop(); });
}

StorageWorker::~StorageWorker() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  not_empty_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void StorageWorker::post(std::function<void()> job) {
  std::unique_lock lock(mutex_);
  not_full_.wait(lock, [&] { return jobs_.size() < capacity_; });
  jobs_.push_back(std::move(job));
  lock.unlock();
  not_empty_.notify_one();
}

void StorageWorker::flush() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [&] { return jobs_.empty() && !busy_; });
}

void StorageWorker::loop() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(mutex_);
      not_empty_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
      if (jobs_.empty()) return;  // stopping with nothing left
      job = std::move(jobs_.front());
      jobs_.pop_front();
      busy_ = true;
    }
    not_full_.notify_one();
    try {
      job();
    } catch (const std::exception& ex) {
      ++failures_;
      spdlog::error("storage job failed: {}", ex.what());
    }
    {
      std::lock_guard lock(mutex_);
      busy_ = false;
    }
    idle_.notify_all();
  }
}

void persist_outputs(store::SessionStore& store, const store::OutputScope& scope, const FrameOutputs& outputs) {
  for (const auto& e : outputs.entries) {
    if (e.error) continue;
    if (e.prediction) std::visit([&](const auto& p) { store.store_result(scope, e.model_id, outputs.frame_index, p); },
                                 *e.prediction);
    store.store_composite(scope, e.model_id, to_string(e.task), outputs.frame_index, e.artifact, e.extension);
    if (!e.metric_rows.empty()) store.append_metrics(scope, e.model_id, e.metric_rows);
  }
}

// ---------------------------------------------------------------- live runtime

SessionRuntime::SessionRuntime(store::SessionStore& store, const gateway::Gateway& gw, store::SessionHandle handle,
                               SessionManifest manifest, ExperimentProtocol protocol, std::size_t queue_bound,
                               std::vector<std::filesystem::path> search_dirs)
    : store_(store),
      manifest_(manifest),
      handle_(std::move(handle)),
      pipeline_(std::move(manifest), gw, std::move(protocol), std::move(search_dirs)),
      queue_bound_(std::max<std::size_t>(queue_bound, 1)) {
  renderer_stats_ = pipeline_.renderer().stats();
  next_index_ = handle_.frame_count();
  if (next_index_ > 0) last_ts_ = handle_.index().last_ts;
  worker_ = std::thread([this] { render_loop(); });
}

SessionRuntime::~SessionRuntime() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  storage_.flush();
}

wire::FrameMeta SessionRuntime::submit_frame(const wire::Envelope& env) {
  if (env.type != wire::MessageType::Frame) throw Error(ErrorCode::PreconditionViolation, "expected a FRAME");
  if (env.payloads.size() != 2) throw Error(ErrorCode::SchemaMismatch, "FRAME needs [rgb_png, depth_raw]");
  std::lock_guard submit(submit_mutex_);
  const auto meta = wire::parse_frame_header(env.header);
  if (meta.index != next_index_)
    throw Error(ErrorCode::OutOfOrderFrame,
                "expected frame " + std::to_string(next_index_) + ", got " + std::to_string(meta.index));
  if (last_ts_ && meta.timestamp_ns <= *last_ts_)
    throw Error(ErrorCode::OutOfOrderFrame, "timestamps must strictly increase");
  Frame frame = wire::decode_frame(env, manifest_);
  const auto t = manifest_.target_resolution;
  if (frame.rgb.width != t.width || frame.rgb.height != t.height)
    throw Error(ErrorCode::SchemaMismatch, "rgb is " + std::to_string(frame.rgb.width) + "x" +
                                               std::to_string(frame.rgb.height) + ", manifest target is " +
                                               std::to_string(t.width) + "x" + std::to_string(t.height));
  ++next_index_;
  last_ts_ = meta.timestamp_ns;

  storage_.post([this, meta, rgb = env.payloads[0], depth = env.payloads[1]] {
    store_.append_frame_encoded(handle_, meta.index, meta.timestamp_ns, meta.pose, rgb, depth);
  });

  {
    std::lock_guard lock(mutex_);
    ++stats_.frames_received;
    if (queue_.size() >= queue_bound_) {
      queue_.pop_front();
      ++stats_.frames_dropped;
    }
    queue_.push_back({std::move(frame)});
  }
  cv_.notify_one();
  return meta;
}

Json SessionRuntime::control(const wire::ControlCommand& cmd) {
  if (wire::control_session(cmd) != manifest_.session_id)
    throw Error(ErrorCode::NoSuchSession, "control addressed to session '" + wire::control_session(cmd) + "'");
  if (std::holds_alternative<wire::ReplaySeek>(cmd) || std::holds_alternative<wire::ReplayModeCmd>(cmd))
    throw Error(ErrorCode::PreconditionViolation, std::string(wire::control_name(cmd)) + " applies to replays only");
  if (const auto* c = std::get_if<wire::SetObjectPose>(&cmd)) {
    const auto& objs = manifest_.objects;
    if (std::none_of(objs.begin(), objs.end(), [&](const auto& o) { return o.object_id == c->object_id; }))
      throw Error(ErrorCode::PreconditionViolation, "no object '" + c->object_id + "'");
  }
  {
    std::lock_guard lock(mutex_);
    pending_controls_.push_back(cmd);
  }
  return wire::control_to_json(cmd);
}

void SessionRuntime::render_loop() {
  for (;;) {
    QueuedFrame item;
    std::vector<wire::ControlCommand> controls;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      item = std::move(queue_.front());
      queue_.pop_front();
      controls.swap(pending_controls_);
      in_flight_ = true;
    }
    const auto index = item.frame.index;
    for (const auto& c : controls) {
      try {
        pipeline_.apply_control(c);
        storage_.post([this, index, event = wire::control_to_json(c)] {
          store_.append_event(manifest_.session_id,
                              Json{{"frame_index", index}, {"recorded_at", utc_now_rfc3339()}, {"command", event}});
        });
      } catch (const Error& ex) {
        spdlog::warn("{}: control {} rejected: {}", manifest_.session_id, wire::control_name(c), ex.what());
      }
    }

    auto outputs = std::make_shared<FrameOutputs>(pipeline_.process_frame(item.frame));
    for (const auto& e : outputs->entries) subscribers_.broadcast(e.envelope);
    storage_.post([this, outputs] { persist_outputs(store_, {manifest_.session_id, std::nullopt}, *outputs); });

    std::function<void(const FrameOutputs&)> observer;
    {
      std::lock_guard lock(mutex_);
      ++stats_.frames_processed;
      stats_.outputs_emitted += outputs->entries.size();
      renderer_stats_ = pipeline_.renderer().stats();
      in_flight_ = false;
      observer = observer_;
    }
    drained_.notify_all();
    if (observer) observer(*outputs);
  }
}

void SessionRuntime::finish() {
  {
    std::unique_lock lock(mutex_);
    drained_.wait(lock, [&] { return queue_.empty() && !in_flight_; });
  }
  storage_.flush();
}

RuntimeStats SessionRuntime::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

render::RendererStats SessionRuntime::renderer_stats() const {
  std::lock_guard lock(mutex_);
  return renderer_stats_;
}

void SessionRuntime::set_frame_observer(std::function<void(const FrameOutputs&)> fn) {
  std::lock_guard lock(mutex_);
  observer_ = std::move(fn);
}

// ---------------------------------------------------------------- replay

std::string generate_run_id() {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  const auto stamp = utc_now_rfc3339();
  std::string compact;
  for (char c : stamp)
    if (std::isalnum(static_cast<unsigned char>(c))) compact += c;
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "-%04x%02x", rd() & 0xffffu, counter++ & 0xffu);
  return "run-" + compact + suffix;
}

namespace {

ReplayOptions checked_options(const store::SessionStore& store, const std::string& session_id, ReplayOptions o) {
  if (o.run_id.empty()) o.run_id = generate_run_id();
  if (!store::is_safe_component(o.run_id))
    throw Error(ErrorCode::PreconditionViolation, "run_id must be a plain name");
  if (std::filesystem::exists(store.scope_dir({session_id, o.run_id})))
    throw Error(ErrorCode::PreconditionViolation, "run '" + o.run_id + "' already exists");
  return o;
}

}  // namespace

ReplaySession::ReplaySession(store::SessionStore& store, const gateway::Gateway& gw, const std::string& session_id,
                             ExperimentProtocol protocol, ReplayOptions options,
                             std::vector<std::filesystem::path> search_dirs)
    : store_(store),
      session_id_(session_id),
      options_(checked_options(store, session_id, std::move(options))),
      frame_count_(store.load_index(session_id).frame_count),
      events_(options_.apply_recorded_events ? store.load_events(session_id) : std::vector<Json>{}),
      pipeline_(store.load_manifest(session_id), gw, std::move(protocol), std::move(search_dirs)) {
  if (frame_count_ == 0) throw Error(ErrorCode::EmptySession, "session '" + session_id + "' has no frames");
}

ReplaySession::~ReplaySession() { stop(); }

FrameOutputs ReplaySession::process_index(std::uint64_t index) {
  while (next_event_ < events_.size() && events_[next_event_].at("frame_index").get<std::uint64_t>() <= index) {
    try {
      pipeline_.apply_control(wire::parse_control(events_[next_event_].at("command")));
    } catch (const std::exception& ex) {
      spdlog::warn("{}: recorded event {} skipped: {}", session_id_, next_event_, ex.what());
    }
    ++next_event_;
  }
  std::vector<wire::ControlCommand> controls;
  {
    std::lock_guard lock(mutex_);
    controls.swap(pending_controls_);
  }
  for (const auto& c : controls) pipeline_.apply_control(c);

  const Frame frame = store_.load_frame(session_id_, index);
  auto outputs = pipeline_.process_frame(frame);
  persist_outputs(store_, scope(), outputs);
  for (const auto& e : outputs.entries) subscribers_.broadcast(e.envelope);
  return outputs;
}

std::vector<FrameOutputs> ReplaySession::run_all() {
  std::vector<FrameOutputs> all;
  all.reserve(frame_count_);
  for (std::uint64_t i = 0; i < frame_count_; ++i) all.push_back(process_index(i));
  {
    std::lock_guard lock(mutex_);
    cursor_ = frame_count_;
    finished_ = true;
  }
  subscribers_.broadcast({wire::MessageType::End,
                          Json{{"session_id", session_id_}, {"run_id", options_.run_id}, {"frames", frame_count_}},
                          {}});
  cv_.notify_all();
  return all;
}

void ReplaySession::start() {
  if (thread_.joinable()) throw Error(ErrorCode::PreconditionViolation, "replay already started");
  thread_ = std::thread([this] { drive(); });
}

void ReplaySession::drive() {
  auto pace_start = Clock::now();
  std::uint64_t pace_base = 0;
  for (;;) {
    std::uint64_t index = 0;
    {
      std::unique_lock lock(mutex_);
      for (;;) {
        if (stopping_) return;
        if (!seeks_.empty()) {
          index = seeks_.front();
          seeks_.pop_front();
          cursor_ = index + 1;
          restart_pacing_ = true;
          break;
        }
        if (options_.mode == wire::ReplayMode::video && cursor_ < frame_count_) {
          if (restart_pacing_) {
            pace_start = Clock::now();
            pace_base = cursor_;
            restart_pacing_ = false;
          }
          if (options_.fps > 0) {
            const auto due = pace_start + std::chrono::duration_cast<Clock::duration>(
                                              std::chrono::duration<double>((cursor_ - pace_base) / options_.fps));
            if (Clock::now() < due) {
              cv_.wait_until(lock, due);
              continue;  // re-check for seeks, mode changes and stop
            }
          }
          index = cursor_++;
          break;
        }
        if (options_.mode == wire::ReplayMode::video && cursor_ >= frame_count_ && !finished_) {
          finished_ = true;
          lock.unlock();
          subscribers_.broadcast(
              {wire::MessageType::End,
               Json{{"session_id", session_id_}, {"run_id", options_.run_id}, {"frames", frame_count_}},
               {}});
          cv_.notify_all();
          lock.lock();
          continue;
        }
        cv_.wait(lock);
      }
    }
    try {
      process_index(index);
    } catch (const std::exception& ex) {
      spdlog::error("{} replay frame {}: {}", session_id_, index, ex.what());
      subscribers_.broadcast(wire::make_error(ErrorCode::CorruptFrame, ex.what(),
                                              Json{{"session_id", session_id_}, {"frame_index", index}}));
    }
  }
}

Json ReplaySession::control(const wire::ControlCommand& cmd) {
  if (wire::control_session(cmd) != session_id_)
    throw Error(ErrorCode::NoSuchSession, "control addressed to session '" + wire::control_session(cmd) + "'");
  {
    std::lock_guard lock(mutex_);
    if (const auto* s = std::get_if<wire::ReplaySeek>(&cmd)) {
      if (s->frame_index >= frame_count_)
        throw Error(ErrorCode::OutOfRange, "seek to frame " + std::to_string(s->frame_index) + " of " +
                                               std::to_string(frame_count_));
      if (options_.mode == wire::ReplayMode::frame_by_frame) {
        seeks_.push_back(s->frame_index);
      } else {
        cursor_ = s->frame_index;
        restart_pacing_ = true;
      }
      finished_ = false;
    } else if (const auto* m = std::get_if<wire::ReplayModeCmd>(&cmd)) {
      options_.mode = m->mode;
      options_.fps = m->fps;
      restart_pacing_ = true;
    } else {
      if (const auto* p = std::get_if<wire::SetObjectPose>(&cmd)) {
        const auto& objs = pipeline_.manifest().objects;
        if (std::none_of(objs.begin(), objs.end(), [&](const auto& o) { return o.object_id == p->object_id; }))
          throw Error(ErrorCode::PreconditionViolation, "no object '" + p->object_id + "'");
      }
      pending_controls_.push_back(cmd);
    }
  }
  cv_.notify_all();
  return wire::control_to_json(cmd);
}

void ReplaySession::wait() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return finished_ || stopping_; });
}

bool ReplaySession::finished() const {
  std::lock_guard lock(mutex_);
  return finished_;
}

void ReplaySession::stop() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
}

}  // namespace edgeval::orchestrator
