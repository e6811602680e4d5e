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

#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <thread>

#include "edgeval/codec.hpp"
#include "edgeval/runtime.hpp"
#include "support.hpp"

using namespace edgeval;
using namespace edgeval::orchestrator;
using edgeval::test::error_code_of;
using Clock = std::chrono::steady_clock;

namespace {

constexpr int kW = 16, kH = 21;

gateway::ModelDescriptor builtin(const std::string& id, const std::string& name) {
  return {id, gateway::TaskKind::depth, gateway::BuiltinBackend{name, Json::object()}, gateway::kDefaultTimeoutMs};
}

class SleepyModel final : public gateway::Model {
 public:
  explicit SleepyModel(int ms) : ms_(ms) {}
  gateway::Prediction infer(const Frame& f, const SessionManifest&) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms_));
    return f.depth;
  }

 private:
  int ms_;
};

ExperimentProtocol plane_protocol(const std::string& model = "passthrough") {
  return {"p", {{model, Task::occlusion_plane, Json::object(), {"rmse"}}}};
}

struct Fixture {
  test::TempDir dir;
  store::SessionStore store{dir.path()};
  gateway::Gateway gw;
  Fixture() {
    gw.register_model(builtin("passthrough", "sensor-passthrough"));
    gw.register_model(builtin("x2", "scale(2)"));
    auto slow = builtin("slow", "slow");
    slow.timeout_ms = 2000;
    gw.register_model(slow, std::make_shared<SleepyModel>(60));
  }

  /// Stores `n` ramp frames directly, bypassing the live runtime.
  void seed(const std::string& id, int n) {
    auto h = store.begin_session(test::make_manifest(id, kW, kH));
    for (int i = 0; i < n; ++i) store.append_frame(h, test::ramp_frame(i, kW, kH));
  }
};

std::vector<wire::Envelope> decode_all(const std::vector<SharedBytes>& msgs) {
  std::vector<wire::Envelope> out;
  for (const auto& m : msgs) out.push_back(wire::decode(*m));
  return out;
}

}  // namespace

TEST(QueueSubscriber, DropsWhenFull) {
  QueueSubscriber q(2);
  const auto msg = std::make_shared<const Bytes>(Bytes{1});
  EXPECT_TRUE(q.offer(msg));
  EXPECT_TRUE(q.offer(msg));
  EXPECT_FALSE(q.offer(msg));
  EXPECT_EQ(q.dropped(), 1u);
  EXPECT_EQ(q.drain().size(), 2u);
  EXPECT_FALSE(q.pop(std::chrono::milliseconds(1)));
}

TEST(StorageWorker, RunsJobsInOrderAndCountsFailures) {
  std::vector<int> seen;
  StorageWorker w(2);
  for (int i = 0; i < 20; ++i) w.post([&, i] { seen.push_back(i); });
  w.post([] { throw Error(ErrorCode::StorageUnavailable, "disk gone"); });
  w.flush();
  ASSERT_EQ(seen.size(), 20u);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(seen[i], i);
  EXPECT_EQ(w.failures(), 1u);
}

TEST(SessionRuntime, PersistsFramesAndEmitsComposites) {
  Fixture fx;
  const auto m = test::make_manifest("live", kW, kH);
  auto h = fx.store.begin_session(m);
  SessionRuntime rt(fx.store, fx.gw, std::move(h), m, plane_protocol());
  auto sub = std::make_shared<QueueSubscriber>();
  rt.subscribers().add(sub);
  std::vector<wire::Envelope> sent;
  for (int i = 0; i < 5; ++i) {
    sent.push_back(wire::make_frame(test::ramp_frame(i, kW, kH)));
    EXPECT_EQ(rt.submit_frame(sent.back()).index, static_cast<std::uint64_t>(i));
  }
  rt.finish();
  const auto stats = rt.stats();
  EXPECT_EQ(stats.frames_received, 5u);
  EXPECT_EQ(stats.frames_processed + stats.frames_dropped, 5u);

  EXPECT_EQ(fx.store.load_index("live").frame_count, 5u);
  for (int i = 0; i < 5; ++i) {
    const auto raw = fx.store.load_frame_raw("live", i);
    EXPECT_EQ(raw.rgb_png, sent[i].payloads[0]);
    EXPECT_EQ(raw.depth_raw, sent[i].payloads[1]);
  }
  const auto got = decode_all(sub->drain());
  ASSERT_EQ(got.size(), stats.frames_processed);
  std::uint64_t last = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].type, wire::MessageType::Composite);
    const auto idx = got[i].header["frame_index"].get<std::uint64_t>();
    if (i) EXPECT_GT(idx, last);
    last = idx;
    EXPECT_TRUE(std::filesystem::exists(
        fx.store.composite_path({"live", std::nullopt}, "passthrough", "occlusion_plane", idx)));
  }
  const auto jsonl = fx.store.read_metrics({"live", std::nullopt}, "passthrough");
  EXPECT_EQ(static_cast<std::size_t>(std::count(jsonl.begin(), jsonl.end(), '\n')), stats.frames_processed);
}

TEST(SessionRuntime, RejectsBadFrames) {
  Fixture fx;
  const auto m = test::make_manifest("live", kW, kH);
  SessionRuntime rt(fx.store, fx.gw, fx.store.begin_session(m), m, plane_protocol());
  EXPECT_EQ(error_code_of([&] { rt.submit_frame(wire::make_frame(test::ramp_frame(1, kW, kH))); }),
            ErrorCode::OutOfOrderFrame);
  EXPECT_EQ(error_code_of([&] { rt.submit_frame(wire::make_frame(test::make_frame(0, kW + 1, kH, 900))); }),
            ErrorCode::SchemaMismatch);
  rt.submit_frame(wire::make_frame(test::ramp_frame(0, kW, kH)));
  auto same_ts = test::ramp_frame(1, kW, kH);
  same_ts.timestamp_ns = test::ramp_frame(0, kW, kH).timestamp_ns;
  EXPECT_EQ(error_code_of([&] { rt.submit_frame(wire::make_frame(same_ts)); }), ErrorCode::OutOfOrderFrame);
  EXPECT_EQ(error_code_of([&] { rt.submit_frame(wire::make_end()); }), ErrorCode::PreconditionViolation);
  rt.finish();
  EXPECT_EQ(fx.store.load_index("live").frame_count, 1u);
}

TEST(SessionRuntime, DropsOldestUnderBackPressure) {
  Fixture fx;
  const auto m = test::make_manifest("bp", kW, kH);
  SessionRuntime rt(fx.store, fx.gw, fx.store.begin_session(m), m, plane_protocol("slow"), 2);
  std::vector<std::uint64_t> processed;
  rt.set_frame_observer([&](const FrameOutputs& o) { processed.push_back(o.frame_index); });
  for (int i = 0; i < 12; ++i) rt.submit_frame(wire::make_frame(test::ramp_frame(i, kW, kH)));
  rt.finish();
  const auto s = rt.stats();
  EXPECT_GT(s.frames_dropped, 0u);
  EXPECT_EQ(s.frames_processed + s.frames_dropped, 12u);
  ASSERT_EQ(processed.size(), s.frames_processed);
  for (std::size_t i = 1; i < processed.size(); ++i) EXPECT_GT(processed[i], processed[i - 1]);
  // The newest frame always survives drop-oldest.
  EXPECT_EQ(processed.back(), 11u);
  // Storage keeps every captured frame.
  EXPECT_EQ(fx.store.load_index("bp").frame_count, 12u);
}

TEST(SessionRuntime, SlowStorageDoesNotDelayComposites) {
  Fixture fx;
  const auto m = test::make_manifest("slowdisk", kW, kH);
  auto h = fx.store.begin_session(m);
  fx.store.set_fault_hook([](const std::filesystem::path&) { std::this_thread::sleep_for(std::chrono::milliseconds(80)); });
  SessionRuntime rt(fx.store, fx.gw, std::move(h), m, plane_protocol());
  auto sub = std::make_shared<QueueSubscriber>();
  rt.subscribers().add(sub);
  const auto t0 = Clock::now();
  std::vector<double> latency_ms;
  for (int i = 0; i < 6; ++i) {
    const auto sent = Clock::now();
    rt.submit_frame(wire::make_frame(test::ramp_frame(i, kW, kH)));
    const auto msg = sub->pop(std::chrono::milliseconds(2000));
    ASSERT_TRUE(msg);
    latency_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - sent).count());
  }
  const double emit_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  rt.finish();
  const double total_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  for (double l : latency_ms) EXPECT_LT(l, 60.0);
  // Each frame costs at least three 80 ms writes on the storage side.
  EXPECT_GT(total_ms, 6 * 3 * 80.0);
  EXPECT_LT(emit_ms, total_ms / 3);
  EXPECT_EQ(fx.store.load_index("slowdisk").frame_count, 6u);
}

TEST(SessionRuntime, ControlsApplyAtNextFrameAndAreRecorded) {
  Fixture fx;
  const auto m = test::make_manifest("ctl", kW, kH);
  SessionRuntime rt(fx.store, fx.gw, fx.store.begin_session(m), m, plane_protocol());
  std::vector<Bytes> artifacts;
  rt.set_frame_observer([&](const FrameOutputs& o) { artifacts.push_back(o.entries.at(0).artifact); });
  for (int i = 0; i < 2; ++i) {
    rt.submit_frame(wire::make_frame(test::ramp_frame(i, kW, kH)));
    rt.finish();
  }
  EXPECT_EQ(rt.control(wire::SetPlaneDepth{"ctl", 0.95}), (Json{{"type", "set_plane_depth"}, {"session_id", "ctl"}, {"depth_m", 0.95}}));
  for (int i = 2; i < 4; ++i) {
    rt.submit_frame(wire::make_frame(test::ramp_frame(i, kW, kH)));
    rt.finish();
  }
  ASSERT_EQ(artifacts.size(), 4u);
  EXPECT_EQ(decode_png(artifacts[1]).pixel(0, 10)[0], 200);
  EXPECT_EQ(decode_png(artifacts[2]).pixel(0, 10)[0], 0);

  const auto events = fx.store.load_events("ctl");
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0]["frame_index"], 2);
  EXPECT_EQ(events[0]["command"]["type"], "set_plane_depth");

  EXPECT_EQ(error_code_of([&] { rt.control(wire::ReplaySeek{"ctl", 0}); }), ErrorCode::PreconditionViolation);
  EXPECT_EQ(error_code_of([&] { rt.control(wire::SetObjectPose{"ctl", "ghost", Pose::identity(), 1.0}); }),
            ErrorCode::PreconditionViolation);
  EXPECT_EQ(error_code_of([&] { rt.control(wire::SetPlaneDepth{"other", 1.0}); }), ErrorCode::NoSuchSession);
}

TEST(Replay, DeterministicAcrossRuns) {
  Fixture fx;
  fx.seed("rec", 6);
  const ExperimentProtocol proto{"p", {{"passthrough", Task::occlusion_plane, Json::object(), {"rmse"}},
                                       {"x2", Task::point_cloud, Json::object(), {"absrel"}}}};
  ReplaySession a(fx.store, fx.gw, "rec", proto, {"run-a"}, {});
  ReplaySession b(fx.store, fx.gw, "rec", proto, {"run-b"}, {});
  const auto oa = a.run_all(), ob = b.run_all();
  ASSERT_EQ(oa.size(), 6u);
  for (std::size_t i = 0; i < oa.size(); ++i) {
    ASSERT_EQ(oa[i].entries.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(oa[i].entries[k].artifact, ob[i].entries[k].artifact);
    const auto pa = fx.store.composite_path(a.scope(), "passthrough", "occlusion_plane", i);
    const auto pb = fx.store.composite_path(b.scope(), "passthrough", "occlusion_plane", i);
    EXPECT_EQ(read_file(pa.string()), read_file(pb.string()));
    EXPECT_TRUE(std::filesystem::exists(fx.store.composite_path(a.scope(), "x2", "point_cloud", i, ".pcd")));
  }
  EXPECT_EQ(fx.store.read_metrics(a.scope(), "x2"), fx.store.read_metrics(b.scope(), "x2"));
  EXPECT_EQ(fx.store.load_depth_result(a.scope(), "x2", 3).at(0, 0), 1000);
}

TEST(Replay, Errors) {
  Fixture fx;
  fx.store.begin_session(test::make_manifest("empty", kW, kH));
  EXPECT_EQ(error_code_of([&] { ReplaySession r(fx.store, fx.gw, "empty", plane_protocol(), {}, {}); }),
            ErrorCode::EmptySession);
  EXPECT_EQ(error_code_of([&] { ReplaySession r(fx.store, fx.gw, "nope", plane_protocol(), {}, {}); }),
            ErrorCode::NoSuchSession);
  fx.seed("five", 5);
  ReplaySession r(fx.store, fx.gw, "five", plane_protocol(), {"r1"}, {});
  EXPECT_EQ(error_code_of([&] { r.control(wire::ReplaySeek{"five", 10}); }), ErrorCode::OutOfRange);
  r.run_all();
  EXPECT_EQ(error_code_of([&] { ReplaySession again(fx.store, fx.gw, "five", plane_protocol(), {"r1"}, {}); }),
            ErrorCode::PreconditionViolation);
  EXPECT_EQ(error_code_of([&] { ReplaySession bad(fx.store, fx.gw, "five", plane_protocol(), {"../x"}, {}); }),
            ErrorCode::PreconditionViolation);
}

TEST(Replay, AppliesRecordedEvents) {
  Fixture fx;
  fx.seed("ev", 4);
  fx.store.append_event("ev", Json{{"frame_index", 2}, {"recorded_at", "2026-01-01T00:00:00Z"},
                                   {"command", wire::control_to_json(wire::SetPlaneDepth{"ev", 0.95})}});
  ReplaySession with(fx.store, fx.gw, "ev", plane_protocol(), {"with"}, {});
  ReplayOptions plain{"without"};
  plain.apply_recorded_events = false;
  ReplaySession without(fx.store, fx.gw, "ev", plane_protocol(), plain, {});
  const auto a = with.run_all(), b = without.run_all();
  EXPECT_EQ(a[1].entries[0].artifact, b[1].entries[0].artifact);
  EXPECT_EQ(decode_png(a[2].entries[0].artifact).pixel(0, 10)[0], 0);
  EXPECT_EQ(decode_png(b[2].entries[0].artifact).pixel(0, 10)[0], 200);
}

TEST(Replay, VideoModeEmitsEveryFrameThenEnd) {
  Fixture fx;
  fx.seed("vid", 8);
  ReplayOptions opt{"v"};
  opt.fps = 200;
  ReplaySession r(fx.store, fx.gw, "vid", plane_protocol(), opt, {});
  auto sub = std::make_shared<QueueSubscriber>(1 << 12);
  r.subscribers().add(sub);
  r.start();
  r.wait();
  EXPECT_TRUE(r.finished());
  const auto got = decode_all(sub->drain());
  ASSERT_EQ(got.size(), 9u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(got[i].header["frame_index"], i);
  EXPECT_EQ(got.back().type, wire::MessageType::End);
  EXPECT_EQ(got.back().header["frames"], 8);
}

TEST(Replay, FrameByFrameFollowsSeeks) {
  Fixture fx;
  fx.seed("fbf", 5);
  ReplayOptions opt{"f"};
  opt.mode = wire::ReplayMode::frame_by_frame;
  ReplaySession r(fx.store, fx.gw, "fbf", plane_protocol(), opt, {});
  auto sub = std::make_shared<QueueSubscriber>();
  r.subscribers().add(sub);
  r.start();
  EXPECT_FALSE(sub->pop(std::chrono::milliseconds(100)));
  r.control(wire::ReplaySeek{"fbf", 3});
  auto msg = sub->pop(std::chrono::milliseconds(2000));
  ASSERT_TRUE(msg);
  EXPECT_EQ(wire::decode(**msg).header["frame_index"], 3);
  r.control(wire::ReplaySeek{"fbf", 1});
  msg = sub->pop(std::chrono::milliseconds(2000));
  ASSERT_TRUE(msg);
  EXPECT_EQ(wire::decode(**msg).header["frame_index"], 1);
  EXPECT_FALSE(sub->pop(std::chrono::milliseconds(100)));
  r.stop();
}

TEST(Replay, DifferentModelsThanCapture) {
  Fixture fx;
  const auto m = test::make_manifest("cap", kW, kH);
  {
    SessionRuntime rt(fx.store, fx.gw, fx.store.begin_session(m), m, plane_protocol("passthrough"));
    for (int i = 0; i < 3; ++i) rt.submit_frame(wire::make_frame(test::ramp_frame(i, kW, kH)));
    rt.finish();
  }
  ReplaySession r(fx.store, fx.gw, "cap", plane_protocol("x2"), {"later"}, {});
  const auto out = r.run_all();
  ASSERT_EQ(out.size(), 3u);
  EXPECT_FALSE(out[0].entries[0].error);
  EXPECT_NE(fx.store.read_metrics(r.scope(), "x2").find("\"rmse\""), std::string::npos);
}

TEST(RunId, UniqueAndSafe) {
  const auto a = generate_run_id(), b = generate_run_id();
  EXPECT_NE(a, b);
  EXPECT_TRUE(store::is_safe_component(a));
}
