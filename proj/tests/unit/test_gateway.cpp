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
#include <httplib.h>

#include <atomic>
#include <fstream>
#include <random>
#include <thread>

#include "edgeval/codec.hpp"
#include "edgeval/gateway.hpp"
#include "edgeval/lighting.hpp"
#include "support.hpp"

using namespace edgeval;
using namespace edgeval::gateway;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::PreconditionViolation;
}

ModelDescriptor builtin(const std::string& id, const std::string& name, Json params = Json::object(),
                        TaskKind kind = TaskKind::depth) {
  return {id, kind, BuiltinBackend{name, std::move(params)}, kDefaultTimeoutMs};
}

/// Local HTTP stub playing a remote model.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/infer", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

/// Reference pseudo-depth: round(1000 * (0.5 + luminance)) mm.
DepthMap luminance_depth(const RgbImage& rgb) {
  DepthMap d(rgb.width, rgb.height);
  for (int v = 0; v < rgb.height; ++v)
    for (int u = 0; u < rgb.width; ++u) {
      const auto* p = rgb.pixel(u, v);
      const double lum = (0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]) / 255.0;
      d.at(u, v) = static_cast<std::uint16_t>(std::lround(1000.0 * (0.5 + lum)));
    }
  return d;
}

class SlowModel final : public Model {
 public:
  explicit SlowModel(int ms) : ms_(ms) {}
  Prediction infer(const Frame& f, const SessionManifest&) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms_));
    return f.depth;
  }

 private:
  int ms_;
};

}  // namespace

TEST(Registry, RegisterAndDuplicate) {
  Gateway gw;
  gw.register_model(builtin("pass", "sensor-passthrough"));
  EXPECT_TRUE(gw.has_model("pass"));
  EXPECT_EQ(code_of([&] { gw.register_model(builtin("pass", "sensor-passthrough")); }), ErrorCode::DuplicateModel);
  EXPECT_EQ(gw.list().size(), 1u);
}

TEST(Registry, BadDescriptors) {
  Gateway gw;
  EXPECT_EQ(code_of([&] { gw.register_model({"r", TaskKind::depth, RemoteBackend{"not a url"}, 100}); }),
            ErrorCode::BadDescriptor);
  EXPECT_EQ(code_of([&] { gw.register_model({"r", TaskKind::depth, RemoteBackend{"ftp://host/x"}, 100}); }),
            ErrorCode::BadDescriptor);
  EXPECT_EQ(code_of([&] { gw.register_model(builtin("b", "teleport")); }), ErrorCode::BadDescriptor);
  EXPECT_EQ(code_of([&] { gw.register_model(builtin("b", "scale")); }), ErrorCode::BadDescriptor);
  EXPECT_EQ(code_of([&] { gw.register_model(builtin("../b", "sensor-passthrough")); }), ErrorCode::BadDescriptor);
  auto d = builtin("b", "sensor-passthrough");
  d.timeout_ms = 0;
  EXPECT_EQ(code_of([&] { gw.register_model(d); }), ErrorCode::BadDescriptor);
  EXPECT_EQ(code_of([&] { gw.register_model(builtin("b", "gray-lit", {{"l", 1.0}}, TaskKind::depth)); }),
            ErrorCode::BadDescriptor);
  EXPECT_TRUE(is_valid_base_url("http://localhost:8000"));
  EXPECT_TRUE(is_valid_base_url("http://10.0.0.2:9000/models/a/"));
  EXPECT_FALSE(is_valid_base_url("http://"));
}

TEST(Registry, UnknownModel) {
  Gateway gw;
  const auto f = test::make_frame(0, 2, 2, 1000);
  EXPECT_EQ(code_of([&] { gw.infer("ghost", f, test::make_manifest("s", 2, 2)); }), ErrorCode::UnknownModel);
}

TEST(Descriptor, JsonAndCallForm) {
  const auto d = parse_descriptor(
      {{"model_id", "s2"}, {"task_kind", "depth"}, {"backend", {{"type", "builtin"}, {"name", "scale(k=2.0)"}}}});
  EXPECT_EQ(d.model_id, "s2");
  EXPECT_EQ(d.timeout_ms, kDefaultTimeoutMs);
  const auto back = parse_descriptor(to_json(d));
  EXPECT_EQ(to_json(back), to_json(d));

  Gateway gw;
  gw.register_model(d);
  gw.register_model(parse_descriptor({{"model_id", "c1"}, {"backend", {{"type", "builtin"}, {"name", "constant(1.0)"}}}}));
  const auto f = test::make_frame(0, 2, 2, 700);
  const auto m = test::make_manifest("s", 2, 2);
  EXPECT_EQ(std::get<DepthMap>(gw.infer("s2", f, m).prediction), DepthMap(2, 2, 1400));
  EXPECT_EQ(std::get<DepthMap>(gw.infer("c1", f, m).prediction), DepthMap(2, 2, 1000));

  const auto r = parse_descriptor({{"model_id", "r"},
                                   {"task_kind", "lighting"},
                                   {"backend", {{"type", "remote"}, {"base_url", "http://h:1"}}},
                                   {"timeout_ms", 250}});
  EXPECT_EQ(r.task_kind, TaskKind::lighting);
  EXPECT_EQ(r.timeout_ms, 250);
  EXPECT_EQ(code_of([] { parse_descriptor({{"model_id", "x"}}); }), ErrorCode::BadDescriptor);
}

TEST(Builtins, SensorPassthroughIdentity) {
  Gateway gw;
  gw.register_model(builtin("pass", "sensor-passthrough"));
  std::mt19937 rng(4);
  auto f = test::make_frame(0, 6, 4, 0, 3, 2);
  f.depth = test::random_depth(rng, 3, 2);
  const auto r = gw.infer("pass", f, test::make_manifest("s", 6, 4, 3, 2));
  EXPECT_EQ(std::get<DepthMap>(r.prediction), f.depth);
  EXPECT_GE(r.latency_ms, 0.0);
}

TEST(Builtins, ScaleElementwise) {
  Gateway gw;
  gw.register_model(builtin("s2", "scale", {{"k", 2.0}}));
  auto f = test::make_frame(0, 4, 1, 0);
  f.depth.values = {0, 1000, 40000, 32768};
  const auto d = std::get<DepthMap>(gw.infer("s2", f, test::make_manifest("s", 4, 1)).prediction);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto in = f.depth.values[i];
    const std::uint16_t want = in == 0 ? 0 : static_cast<std::uint16_t>(std::min<int>(2 * in, 65535));
    EXPECT_EQ(d.values[i], want) << i;
  }
}

TEST(Builtins, ConstantAndPlaneSweep) {
  Gateway gw;
  gw.register_model(builtin("c", "constant", {{"c", 1.0}}));
  gw.register_model(builtin("p", "plane-sweep", {{"a", 0.5}, {"b", 1.0}}));
  const auto f = test::make_frame(0, 2, 2, 333);
  const auto m = test::make_manifest("s", 2, 2);
  EXPECT_EQ(std::get<DepthMap>(gw.infer("c", f, m).prediction).values, std::vector<std::uint16_t>(4, 1000));
  const auto p = std::get<DepthMap>(gw.infer("p", f, m).prediction);
  EXPECT_EQ(p.values, (std::vector<std::uint16_t>{500, 500, 1000, 1000}));
}

TEST(Builtins, GrayLitAndRotateEnv) {
  test::TempDir dir;
  EnvironmentMap src(16, 8);
  for (std::size_t i = 0; i < src.values.size(); ++i) src.values[i] = static_cast<float>(i % 17);
  const auto path = (dir / "src.pfm").string();
  {
    const auto bytes = encode_pfm(src);
    std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  Gateway gw;
  gw.register_model(builtin("g", "gray-lit", {{"l", 0.5}, {"height", 8}}, TaskKind::lighting));
  gw.register_model(builtin("r0", "rotate-env", {{"src", path}, {"delta_deg", 0.0}}, TaskKind::lighting));
  gw.register_model(builtin("r90", "rotate-env", {{"src", path}, {"delta_deg", 90.0}}, TaskKind::lighting));
  const auto f = test::make_frame(0, 2, 2, 1000);
  const auto m = test::make_manifest("s", 2, 2);
  EXPECT_EQ(std::get<EnvironmentMap>(gw.infer("g", f, m).prediction), EnvironmentMap(16, 8, 0.5f));
  EXPECT_EQ(std::get<EnvironmentMap>(gw.infer("r0", f, m).prediction), src);
  EXPECT_EQ(std::get<EnvironmentMap>(gw.infer("r90", f, m).prediction), lighting::rotate_azimuth(src, 90.0));
}

TEST(Builtins, ResolutionAgnostic) {
  Gateway gw;
  gw.register_model(builtin("pass", "sensor-passthrough"));
  const auto f = test::make_frame(0, 64, 36, 1200, 192, 256);
  const auto d = std::get<DepthMap>(gw.infer("pass", f, test::make_manifest("s", 64, 36, 192, 256)).prediction);
  EXPECT_EQ(d.width, 192);
  EXPECT_EQ(d.height, 256);
}

TEST(Timeouts, SlowInProcessModel) {
  Gateway gw;
  auto d = builtin("slow", "sensor-passthrough");
  d.timeout_ms = 50;
  gw.register_model(d, std::make_shared<SlowModel>(400));
  const auto f = test::make_frame(0, 2, 2, 1000);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(code_of([&] { gw.infer("slow", f, test::make_manifest("s", 2, 2)); }), ErrorCode::ModelTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(300));
}

TEST(Remote, RequestSchemaAndLuminanceModel) {
  Json seen;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen = Json::parse(req.body);
    const auto rgb = decode_png(base64_decode(seen["rgb"].get<std::string>()));
    const auto d = luminance_depth(rgb);
    res.set_content(Json{{"model_id", "lum"},
                         {"latency_ms", 1.0},
                         {"depth", {{"width", d.width}, {"height", d.height}, {"data", base64_encode(encode_depth_raw(d))}}}}
                        .dump(),
                    "application/json");
  });
  Gateway gw;
  gw.register_model({"lum", TaskKind::depth, RemoteBackend{stub.url()}, 2000});
  std::mt19937 rng(12);
  for (int i = 0; i < 5; ++i) {
    auto f = test::make_frame(static_cast<std::uint64_t>(i), 7, 5, 1000);
    for (auto& s : f.rgb.values) s = static_cast<std::uint8_t>(rng());
    const auto m = test::make_manifest("s", 7, 5);
    const auto d = std::get<DepthMap>(gw.infer("lum", f, m).prediction);
    EXPECT_EQ(d, luminance_depth(f.rgb));
    EXPECT_EQ(seen["task_kind"], "depth");
    EXPECT_EQ(seen["intrinsics"], Json(m.intrinsics));
    EXPECT_EQ(seen["extras"]["frame_index"], i);
  }
}

TEST(Remote, EnvMapResponse) {
  const EnvironmentMap env(8, 4, 0.25f);
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(Json{{"env_map", {{"width", 8}, {"height", 4}, {"data", base64_encode(encode_pfm(env))}}}}.dump(),
                    "application/json");
  });
  Gateway gw;
  gw.register_model({"env", TaskKind::lighting, RemoteBackend{stub.url()}, 2000});
  const auto f = test::make_frame(0, 2, 2, 1000);
  EXPECT_EQ(std::get<EnvironmentMap>(gw.infer("env", f, test::make_manifest("s", 2, 2)).prediction), env);
}

TEST(Remote, ServerErrorCarriesBodyExcerpt) {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("CUDA out of memory", "text/plain");
  });
  Gateway gw;
  gw.register_model({"bad", TaskKind::depth, RemoteBackend{stub.url()}, 2000});
  try {
    gw.infer("bad", test::make_frame(0, 2, 2, 1000), test::make_manifest("s", 2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModelError);
    EXPECT_NE(std::string(e.what()).find("CUDA out of memory"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("500"), std::string::npos);
  }
}

TEST(Remote, MalformedResponses) {
  std::atomic<int> mode{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    switch (mode.load()) {
      case 0: res.set_content("not json", "application/json"); break;
      case 1: res.set_content(R"({"depth":{"width":2,"height":2,"data":"AAAA"}})", "application/json"); break;
      default: res.set_content(R"({"env_map":{"width":8,"height":4,"data":"AAAA"}})", "application/json"); break;
    }
  });
  Gateway gw;
  gw.register_model({"m", TaskKind::depth, RemoteBackend{stub.url()}, 2000});
  const auto f = test::make_frame(0, 2, 2, 1000);
  const auto man = test::make_manifest("s", 2, 2);
  EXPECT_EQ(code_of([&] { gw.infer("m", f, man); }), ErrorCode::ModelError);
  mode = 1;
  EXPECT_EQ(code_of([&] { gw.infer("m", f, man); }), ErrorCode::SchemaMismatch);
  mode = 2;
  EXPECT_EQ(code_of([&] { gw.infer("m", f, man); }), ErrorCode::SchemaMismatch);
}

TEST(Remote, Timeout) {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content("{}", "application/json");
  });
  Gateway gw;
  gw.register_model({"slow", TaskKind::depth, RemoteBackend{stub.url()}, 100});
  EXPECT_EQ(code_of([&] { gw.infer("slow", test::make_frame(0, 2, 2, 1000), test::make_manifest("s", 2, 2)); }),
            ErrorCode::ModelTimeout);
}

TEST(Remote, Unreachable) {
  Gateway gw;
  gw.register_model({"gone", TaskKind::depth, RemoteBackend{"http://127.0.0.1:1"}, 1000});
  EXPECT_EQ(code_of([&] { gw.infer("gone", test::make_frame(0, 2, 2, 1000), test::make_manifest("s", 2, 2)); }),
            ErrorCode::ModelError);
}
