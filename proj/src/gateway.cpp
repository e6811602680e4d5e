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

#include "edgeval/gateway.hpp"

#include <httplib.h>

#include <chrono>
#include <future>
#include <regex>
#include <thread>

#include "edgeval/codec.hpp"
#include "edgeval/lighting.hpp"

namespace edgeval::gateway {

namespace {

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------- builtins

class SensorPassthrough final : public Model {
 public:
  Prediction infer(const Frame& f, const SessionManifest&) override { return f.depth; }
};

class ConstantDepth final : public Model {
 public:
  explicit ConstantDepth(double meters) : mm_(to_millimeters(meters)) {}
  Prediction infer(const Frame& f, const SessionManifest&) override {
    return DepthMap(f.depth.width, f.depth.height, mm_);
  }

 private:
  std::uint16_t mm_;
};

class ScaledDepth final : public Model {
 public:
  explicit ScaledDepth(double k) : k_(k) {}
  Prediction infer(const Frame& f, const SessionManifest&) override {
    DepthMap out = f.depth;
    for (auto& v : out.values) {
      if (v == 0) continue;
      const double scaled = std::round(v * k_);
      v = static_cast<std::uint16_t>(std::clamp(scaled, 1.0, 65535.0));
    }
    return out;
  }

 private:
  double k_;
};

/// depth(v) = a + b * v / height meters, a vertical ramp.
class PlaneSweep final : public Model {
 public:
  PlaneSweep(double a, double b) : a_(a), b_(b) {}
  Prediction infer(const Frame& f, const SessionManifest&) override {
    DepthMap out(f.depth.width, f.depth.height);
    for (int v = 0; v < out.height; ++v) {
      const auto mm = to_millimeters(a_ + b_ * v / out.height);
      std::fill_n(out.values.begin() + static_cast<std::size_t>(v) * out.width, out.width, mm);
    }
    return out;
  }

 private:
  double a_, b_;
};

class GrayLit final : public Model {
 public:
  GrayLit(double radiance, int height) : map_(2 * height, height, static_cast<float>(radiance)) {}
  Prediction infer(const Frame&, const SessionManifest&) override { return map_; }

 private:
  EnvironmentMap map_;
};

class RotateEnv final : public Model {
 public:
  RotateEnv(const std::string& src, double delta_deg)
      : map_(lighting::rotate_azimuth(decode_pfm(read_file(src)), delta_deg)) {}
  Prediction infer(const Frame&, const SessionManifest&) override { return map_; }

 private:
  EnvironmentMap map_;
};

double number_param(const Json& params, const char* key, std::optional<double> fallback = std::nullopt) {
  if (params.contains(key)) {
    if (!params.at(key).is_number())
      throw Error(ErrorCode::BadDescriptor, std::string("parameter '") + key + "' must be a number");
    return params.at(key).get<double>();
  }
  if (fallback) return *fallback;
  throw Error(ErrorCode::BadDescriptor, std::string("missing parameter '") + key + "'");
}

/// "scale(k=2.0)" -> name "scale", params {"k": 2.0}; a bare value binds to
/// the builtin's primary parameter.
BuiltinBackend parse_call_form(BuiltinBackend b) {
  const auto open = b.name.find('(');
  if (open == std::string::npos) return b;
  if (b.name.back() != ')') throw Error(ErrorCode::BadDescriptor, "malformed builtin '" + b.name + "'");
  const std::string args = b.name.substr(open + 1, b.name.size() - open - 2);
  b.name = b.name.substr(0, open);
  static const std::map<std::string, std::string> primary{
      {"constant", "c"}, {"scale", "k"}, {"gray-lit", "l"}, {"plane-sweep", "a"}};
  std::stringstream ss(args);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    item = trim(item);
    if (item.empty()) continue;
    std::string key, value;
    if (const auto eq = item.find('='); eq != std::string::npos) {
      key = trim(item.substr(0, eq));
      value = trim(item.substr(eq + 1));
    } else {
      const auto it = primary.find(b.name);
      if (it == primary.end()) throw Error(ErrorCode::BadDescriptor, "builtin '" + b.name + "' needs key=value");
      key = it->second;
      value = item;
    }
    try {
      std::size_t used = 0;
      const double d = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      b.params[key] = d;
    } catch (const std::exception&) {
      b.params[key] = value;
    }
  }
  return b;
}

// ---------------------------------------------------------------- remote

struct ParsedUrl {
  std::string scheme_host_port;
  std::string prefix;
};

ParsedUrl split_url(const std::string& url) {
  static const std::regex re(R"(^(http://[A-Za-z0-9.\-]+(?::[0-9]{1,5})?)(/[^\s?#]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error(ErrorCode::BadDescriptor, "malformed base_url '" + url + "'");
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

class RemoteModel final : public Model {
 public:
  RemoteModel(const RemoteBackend& b, TaskKind kind, int timeout_ms)
      : url_(split_url(b.base_url)), kind_(kind), timeout_ms_(timeout_ms) {}

  Prediction infer(const Frame& f, const SessionManifest& m) override {
    httplib::Client cli(url_.scheme_host_port);
    const auto t = std::chrono::milliseconds(timeout_ms_);
    cli.set_connection_timeout(t);
    cli.set_read_timeout(t);
    cli.set_write_timeout(t);
    const auto body = build_infer_request(kind_, f, m).dump();
    auto res = cli.Post(url_.prefix + "/infer", body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
        throw Error(ErrorCode::ModelTimeout, "remote model timed out: " + httplib::to_string(err));
      throw Error(ErrorCode::ModelError, "remote model unreachable: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300)
      throw Error(ErrorCode::ModelError,
                  "remote model returned " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    Json j;
    try {
      j = Json::parse(res->body);
    } catch (const Json::exception& ex) {
      throw Error(ErrorCode::ModelError, std::string("malformed response: ") + ex.what());
    }
    return parse_infer_response(j, kind_);
  }

 private:
  ParsedUrl url_;
  TaskKind kind_;
  int timeout_ms_;
};

std::unique_ptr<Model> make_model(const ModelDescriptor& d) {
  if (const auto* b = std::get_if<BuiltinBackend>(&d.backend)) return make_builtin(*b, d.task_kind);
  return std::make_unique<RemoteModel>(std::get<RemoteBackend>(d.backend), d.task_kind, d.timeout_ms);
}

void validate(const ModelDescriptor& d) {
  if (d.model_id.empty() || d.model_id.find_first_of("/\\") != std::string::npos || d.model_id == "." ||
      d.model_id == "..")
    throw Error(ErrorCode::BadDescriptor, "model_id must be a nonempty plain name");
  if (d.timeout_ms <= 0) throw Error(ErrorCode::BadDescriptor, "timeout_ms must be positive");
  if (const auto* r = std::get_if<RemoteBackend>(&d.backend); r && !is_valid_base_url(r->base_url))
    throw Error(ErrorCode::BadDescriptor, "malformed base_url '" + r->base_url + "'");
}

}  // namespace

std::string to_string(TaskKind k) { return k == TaskKind::depth ? "depth" : "lighting"; }

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"sensor-passthrough", "constant", "scale",
                                              "plane-sweep", "gray-lit", "rotate-env"};
  return names;
}

std::unique_ptr<Model> make_builtin(const BuiltinBackend& raw, TaskKind kind) {
  const auto b = parse_call_form(raw);
  const auto& p = b.params;
  const bool depth = kind == TaskKind::depth;
  auto require_kind = [&](bool want_depth) {
    if (want_depth != depth)
      throw Error(ErrorCode::BadDescriptor, "builtin '" + b.name + "' is a " +
                                                (want_depth ? "depth" : "lighting") + " model");
  };
  if (b.name == "sensor-passthrough") {
    require_kind(true);
    return std::make_unique<SensorPassthrough>();
  }
  if (b.name == "constant") {
    require_kind(true);
    const double c = number_param(p, "c");
    if (!(c > 0)) throw Error(ErrorCode::BadDescriptor, "constant depth must be > 0");
    return std::make_unique<ConstantDepth>(c);
  }
  if (b.name == "scale") {
    require_kind(true);
    const double k = number_param(p, "k");
    if (!(k > 0)) throw Error(ErrorCode::BadDescriptor, "scale factor must be > 0");
    return std::make_unique<ScaledDepth>(k);
  }
  if (b.name == "plane-sweep") {
    require_kind(true);
    return std::make_unique<PlaneSweep>(number_param(p, "a", 0.5), number_param(p, "b", 1.0));
  }
  if (b.name == "gray-lit") {
    require_kind(false);
    const double l = number_param(p, "l");
    const int h = static_cast<int>(number_param(p, "height", 64.0));
    if (!(l >= 0) || h < 1) throw Error(ErrorCode::BadDescriptor, "gray-lit needs l >= 0 and height >= 1");
    return std::make_unique<GrayLit>(l, h);
  }
  if (b.name == "rotate-env") {
    require_kind(false);
    if (!p.contains("src") || !p.at("src").is_string())
      throw Error(ErrorCode::BadDescriptor, "rotate-env needs a 'src' PFM path");
    try {
      return std::make_unique<RotateEnv>(p.at("src").get<std::string>(), number_param(p, "delta_deg", 0.0));
    } catch (const Error& ex) {
      if (ex.code() == ErrorCode::BadDescriptor) throw;
      throw Error(ErrorCode::BadDescriptor, std::string("rotate-env source: ") + ex.what());
    }
  }
  throw Error(ErrorCode::BadDescriptor, "unknown builtin '" + b.name + "'");
}

bool is_valid_base_url(const std::string& url) {
  try {
    split_url(url);
    return true;
  } catch (const Error&) {
    return false;
  }
}

ModelDescriptor parse_descriptor(const Json& j) {
  ModelDescriptor d;
  try {
    j.at("model_id").get_to(d.model_id);
    const auto kind = j.value("task_kind", std::string("depth"));
    if (kind == "depth") d.task_kind = TaskKind::depth;
    else if (kind == "lighting") d.task_kind = TaskKind::lighting;
    else throw Error(ErrorCode::BadDescriptor, "task_kind must be depth or lighting");
    const auto& backend = j.at("backend");
    const auto type = backend.at("type").get<std::string>();
    if (type == "builtin") {
      d.backend = BuiltinBackend{backend.at("name").get<std::string>(), backend.value("params", Json::object())};
    } else if (type == "remote") {
      d.backend = RemoteBackend{backend.at("base_url").get<std::string>()};
    } else {
      throw Error(ErrorCode::BadDescriptor, "backend.type must be builtin or remote");
    }
    d.timeout_ms = j.value("timeout_ms", kDefaultTimeoutMs);
  } catch (const Json::exception& ex) {
    throw Error(ErrorCode::BadDescriptor, std::string("descriptor: ") + ex.what());
  }
  return d;
}

Json to_json(const ModelDescriptor& d) {
  Json backend;
  if (const auto* b = std::get_if<BuiltinBackend>(&d.backend))
    backend = {{"type", "builtin"}, {"name", b->name}, {"params", b->params}};
  else
    backend = {{"type", "remote"}, {"base_url", std::get<RemoteBackend>(d.backend).base_url}};
  return Json{{"model_id", d.model_id}, {"task_kind", to_string(d.task_kind)}, {"backend", backend},
              {"timeout_ms", d.timeout_ms}};
}

// ---------------------------------------------------------------- registry

void Gateway::register_model(const ModelDescriptor& d) {
  validate(d);
  {
    std::shared_lock lock(mutex_);
    if (models_.count(d.model_id)) throw Error(ErrorCode::DuplicateModel, "model '" + d.model_id + "' exists");
  }
  register_model(d, std::shared_ptr<Model>(make_model(d)));
}

void Gateway::register_model(const ModelDescriptor& d, std::shared_ptr<Model> model) {
  validate(d);
  if (!model) throw Error(ErrorCode::BadDescriptor, "null model");
  std::unique_lock lock(mutex_);
  if (models_.count(d.model_id)) throw Error(ErrorCode::DuplicateModel, "model '" + d.model_id + "' exists");
  models_.emplace(d.model_id, Entry{d, std::move(model)});
}

bool Gateway::has_model(const std::string& model_id) const {
  std::shared_lock lock(mutex_);
  return models_.count(model_id) != 0;
}

std::optional<ModelDescriptor> Gateway::describe(const std::string& model_id) const {
  std::shared_lock lock(mutex_);
  const auto it = models_.find(model_id);
  if (it == models_.end()) return std::nullopt;
  return it->second.descriptor;
}

std::vector<ModelDescriptor> Gateway::list() const {
  std::shared_lock lock(mutex_);
  std::vector<ModelDescriptor> out;
  for (const auto& [id, e] : models_) out.push_back(e.descriptor);
  return out;
}

InferenceResult Gateway::infer(const std::string& model_id, const Frame& frame, const SessionManifest& manifest) const {
  Entry entry;
  {
    std::shared_lock lock(mutex_);
    const auto it = models_.find(model_id);
    if (it == models_.end()) throw Error(ErrorCode::UnknownModel, "no model '" + model_id + "'");
    entry = it->second;
  }

  // Detached worker; it owns copies of everything it reads.
  auto promise = std::make_shared<std::promise<Prediction>>();
  auto future = promise->get_future();
  const auto start = Clock::now();
  std::thread([promise, model = entry.model, frame, manifest]() mutable {
    try {
      promise->set_value(model->infer(frame, manifest));
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  }).detach();

  if (future.wait_for(std::chrono::milliseconds(entry.descriptor.timeout_ms)) != std::future_status::ready)
    throw Error(ErrorCode::ModelTimeout, "model '" + model_id + "' exceeded " +
                                             std::to_string(entry.descriptor.timeout_ms) + " ms");
  InferenceResult result;
  try {
    result.prediction = future.get();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& ex) {
    throw Error(ErrorCode::ModelError, "model '" + model_id + "' failed: " + ex.what());
  }
  result.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();

  const bool is_depth = std::holds_alternative<DepthMap>(result.prediction);
  if (is_depth != (entry.descriptor.task_kind == TaskKind::depth))
    throw Error(ErrorCode::SchemaMismatch, "model '" + model_id + "' returned the wrong prediction kind");
  if (is_depth) {
    const auto& d = std::get<DepthMap>(result.prediction);
    if (d.width < 1 || d.height < 1 || d.values.size() != static_cast<std::size_t>(d.width) * d.height)
      throw Error(ErrorCode::SchemaMismatch, "depth prediction geometry is inconsistent");
  } else if (const auto v = validate_environment_map(std::get<EnvironmentMap>(result.prediction)); !v) {
    throw Error(ErrorCode::SchemaMismatch, "environment map " + v.message);
  }
  return result;
}

// ---------------------------------------------------------------- REST contract

Json build_infer_request(TaskKind kind, const Frame& frame, const SessionManifest& manifest) {
  return Json{{"task_kind", to_string(kind)},
              {"rgb", base64_encode(encode_png(frame.rgb))},
              {"intrinsics", manifest.intrinsics},
              {"extras", {{"frame_index", frame.index}, {"timestamp_ns", frame.timestamp_ns}}}};
}

Prediction parse_infer_response(const Json& j, TaskKind kind) {
  try {
    if (kind == TaskKind::depth) {
      const auto& d = j.at("depth");
      const int w = d.at("width").get<int>(), h = d.at("height").get<int>();
      if (w < 1 || h < 1) throw Error(ErrorCode::SchemaMismatch, "depth dimensions must be positive");
      const auto raw = base64_decode(d.at("data").get<std::string>());
      return decode_depth_raw(raw, w, h);
    }
    const auto& e = j.at("env_map");
    const int w = e.at("width").get<int>(), h = e.at("height").get<int>();
    auto map = decode_pfm(base64_decode(e.at("data").get<std::string>()));
    if (map.width != w || map.height != h)
      throw Error(ErrorCode::SchemaMismatch, "env_map dimensions disagree with payload");
    return map;
  } catch (const Json::exception& ex) {
    throw Error(ErrorCode::SchemaMismatch, std::string("response: ") + ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::SchemaMismatch) throw;
    throw Error(ErrorCode::SchemaMismatch, ex.what());
  }
}

}  // namespace edgeval::gateway
