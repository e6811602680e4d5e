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

#include "edgeval/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "edgeval/codec.hpp"
#include "edgeval/lighting.hpp"
#include "edgeval/metrics.hpp"
#include "edgeval/pointcloud.hpp"

namespace edgeval::orchestrator {

namespace fs = std::filesystem;

namespace {

constexpr double kDefaultPlaneDepth = 1.0;
constexpr int kDefaultProbeResolution = 64;

bool is_depth_task(Task t) {
  return t == Task::object_rendering || t == Task::occlusion_plane || t == Task::point_cloud;
}

bool is_lighting_task(Task t) { return t == Task::env_map_eval || t == Task::three_sphere || t == Task::object_rendering; }

Vec3 light_dir_param(const Json& params) {
  Vec3 d{0.0, 0.6, 0.8};
  if (params.contains("light_dir")) {
    const auto& a = params.at("light_dir");
    if (!a.is_array() || a.size() != 3) throw Error(ErrorCode::InvalidProtocol, "light_dir must be [x, y, z]");
    d = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
  }
  if (d.norm() == 0.0) throw Error(ErrorCode::InvalidProtocol, "light_dir must be nonzero");
  return d.normalized();
}

std::array<std::uint8_t, 3> color_param(const Json& params) {
  if (!params.contains("color")) return {0, 0, 0};
  const auto& c = params.at("color");
  if (!c.is_array() || c.size() != 3) throw Error(ErrorCode::InvalidProtocol, "color must be [r, g, b]");
  std::array<std::uint8_t, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = static_cast<std::uint8_t>(std::clamp(c[i].get<int>(), 0, 255));
  return out;
}

lighting::ProbeMaterial material_param(const Json& params) {
  const auto kind = params.value("material", std::string("diffuse"));
  const double exponent = params.value("phong_exponent", 32.0);
  if (kind == "diffuse") return lighting::ProbeMaterial::diffuse();
  if (kind == "matte") return lighting::ProbeMaterial::matte(exponent);
  if (kind == "mirror") return lighting::ProbeMaterial::mirror();
  throw Error(ErrorCode::InvalidProtocol, "unknown material '" + kind + "'");
}

/// Horizontal strip of tonemapped probes; a second row when `rows` has two.
RgbImage probe_sheet(const std::vector<std::vector<lighting::ProbeRender>>& rows) {
  const int r = rows.front().front().resolution;
  const int cols = static_cast<int>(rows.front().size());
  RgbImage sheet(r * cols, r * static_cast<int>(rows.size()), 3);
  for (std::size_t row = 0; row < rows.size(); ++row)
    for (int c = 0; c < cols; ++c) {
      const auto& p = rows[row][c];
      const auto img = tonemap(r, r, p.image);
      for (int y = 0; y < r; ++y)
        std::copy_n(img.pixel(0, y), r * 3, sheet.pixel(c * r, static_cast<int>(row) * r + y));
    }
  return sheet;
}

wire::Envelope output_envelope(wire::MessageType type, const SessionManifest& m, std::uint64_t index,
                               const std::string& model_id, Task task, Bytes payload) {
  return {type,
          Json{{"session_id", m.session_id}, {"frame_index", index}, {"model_id", model_id}, {"task", to_string(task)}},
          {std::move(payload)}};
}

}  // namespace

Json metric_row(std::uint64_t frame_index, const std::string& metric_id, double value, const std::string& model_id,
                Task task) {
  return Json{{"frame_index", frame_index},
              {"metric_id", metric_id},
              {"value", value},
              {"model_id", model_id},
              {"task", to_string(task)}};
}

void validate_protocol(const ExperimentProtocol& p, const gateway::Gateway& gw) {
  if (p.protocol_id.empty()) throw Error(ErrorCode::InvalidProtocol, "protocol_id must be nonempty");
  if (p.entries.empty()) throw Error(ErrorCode::InvalidProtocol, "entries must be nonempty");
  for (std::size_t i = 0; i < p.entries.size(); ++i) {
    const auto& e = p.entries[i];
    const auto where = "entries[" + std::to_string(i) + "]";
    const auto d = gw.describe(e.model_id);
    if (!d) throw Error(ErrorCode::UnknownModel, where + ".model_id '" + e.model_id + "' is not registered");
    const bool depth_model = d->task_kind == gateway::TaskKind::depth;
    if (depth_model ? !is_depth_task(e.task) : !is_lighting_task(e.task))
      throw Error(ErrorCode::InvalidProtocol, where + ": task " + to_string(e.task) + " does not accept a " +
                                                  gateway::to_string(d->task_kind) + " model");
    for (const auto& id : e.metric_ids) {
      if (!metrics::is_registered_metric(id))
        throw Error(ErrorCode::InvalidProtocol, where + ": metric '" + id + "' is not registered");
      const bool family_ok = depth_model
                                 ? metrics::depth_metric_value({}, id).has_value()
                                 : metrics::lighting_metric_value({}, id).has_value();
      if (!family_ok)
        throw Error(ErrorCode::InvalidProtocol, where + ": metric '" + id + "' does not apply to " +
                                                    gateway::to_string(d->task_kind) + " models");
    }
    if (e.task == Task::occlusion_plane && e.task_params.contains("depth_m")) {
      const auto& dm = e.task_params.at("depth_m");
      if (!dm.is_number() || !(dm.get<double>() > 0))
        throw Error(ErrorCode::InvalidProtocol, where + ".task_params.depth_m must be > 0");
    }
  }
}

Pipeline::Pipeline(SessionManifest manifest, const gateway::Gateway& gw, ExperimentProtocol protocol,
                   std::vector<fs::path> search_dirs)
    : manifest_(std::move(manifest)),
      gateway_(gw),
      protocol_(std::move(protocol)),
      search_dirs_(std::move(search_dirs)),
      renderer_(manifest_, search_dirs_) {}

bool Pipeline::selected(const std::string& model_id) const {
  if (!state_.selected_models) return true;
  const auto& s = *state_.selected_models;
  return std::find(s.begin(), s.end(), model_id) != s.end();
}

void Pipeline::apply_control(const wire::ControlCommand& cmd) {
  if (wire::control_session(cmd) != manifest_.session_id)
    throw Error(ErrorCode::NoSuchSession, "control addressed to session '" + wire::control_session(cmd) + "'");
  if (const auto* c = std::get_if<wire::SetPlaneDepth>(&cmd)) {
    if (!(c->depth_m > 0)) throw Error(ErrorCode::NonpositiveDepth, "depth_m must be > 0");
    state_.plane_depth_m = c->depth_m;
  } else if (const auto* c = std::get_if<wire::SetObjectPose>(&cmd)) {
    if (!renderer_.set_object_pose(c->object_id, c->pose, c->scale))
      throw Error(ErrorCode::PreconditionViolation, "no object '" + c->object_id + "'");
    state_.objects[c->object_id] = {c->pose, c->scale};
  } else if (const auto* c = std::get_if<wire::SelectModels>(&cmd)) {
    state_.selected_models = c->model_ids;
  }
}

double Pipeline::plane_depth_for(const ProtocolEntry& e) const {
  if (state_.plane_depth_m) return *state_.plane_depth_m;
  if (e.task_params.contains("depth_m")) return e.task_params.at("depth_m").get<double>();
  return renderer_.manifest_plane_depth().value_or(kDefaultPlaneDepth);
}

FrameOutputs Pipeline::process_frame(const Frame& frame) {
  FrameOutputs out;
  out.frame_index = frame.index;
  for (std::size_t i = 0; i < protocol_.entries.size(); ++i) {
    const auto& e = protocol_.entries[i];
    if (!selected(e.model_id)) continue;
    out.entries.push_back(run_entry(i, e, frame));
  }
  return out;
}

EntryOutput Pipeline::run_entry(std::size_t i, const ProtocolEntry& e, const Frame& frame) {
  EntryOutput out;
  out.entry_index = i;
  out.model_id = e.model_id;
  out.task = e.task;
  try {
    auto result = gateway_.infer(e.model_id, frame, manifest_);
    out.inference_ms = result.latency_ms;
    if (const auto* depth = std::get_if<DepthMap>(&result.prediction))
      run_depth_task(e, frame, *depth, out);
    else
      run_lighting_task(e, frame, std::get<EnvironmentMap>(result.prediction), out);
    out.prediction = std::move(result.prediction);
  } catch (const Error& ex) {
    spdlog::warn("{} frame {} entry {} ({}): {}", manifest_.session_id, frame.index, i, e.model_id, ex.what());
    out.error = ex.code();
    out.error_message = ex.what();
    out.artifact.clear();
    out.metric_rows.clear();
    out.envelope = wire::make_error(ex.code(), ex.what(),
                                    Json{{"session_id", manifest_.session_id},
                                         {"frame_index", frame.index},
                                         {"model_id", e.model_id},
                                         {"task", to_string(e.task)}});
  }
  return out;
}

void Pipeline::run_depth_task(const ProtocolEntry& e, const Frame& frame, const DepthMap& pred, EntryOutput& out) {
  if (!is_depth_task(e.task))
    throw Error(ErrorCode::SchemaMismatch, "task " + to_string(e.task) + " needs a lighting prediction");

  if (e.task == Task::point_cloud) {
    const int stride = e.task_params.value("stride", pointcloud::kDefaultStride);
    out.artifact = point_cloud(frame, pred, stride);
    out.extension = ".pcd";
    out.envelope = output_envelope(wire::MessageType::PointCloud, manifest_, frame.index, e.model_id, e.task,
                                   out.artifact);
  } else {
    const render::RenderLayer& layer =
        e.task == Task::occlusion_plane
            ? renderer_.render_plane(plane_depth_for(e), color_param(e.task_params))
            : renderer_.render_objects(frame.pose, light_dir_param(e.task_params));
    out.artifact = encode_png(render::composite(frame.rgb, layer, pred, manifest_), PngSpeed::fast);
    out.extension = ".png";
    out.envelope = output_envelope(wire::MessageType::Composite, manifest_, frame.index, e.model_id, e.task,
                                   out.artifact);
  }

  if (e.metric_ids.empty()) return;
  metrics::DepthMetricReport report;
  try {
    report = metrics::depth_metrics_resized(pred, frame.depth);
  } catch (const Error& ex) {
    if (ex.code() != ErrorCode::NoValidPixels) throw;
    spdlog::warn("{} frame {}: no valid pixels for depth metrics", manifest_.session_id, frame.index);
    return;
  }
  for (const auto& id : e.metric_ids)
    if (const auto v = metrics::depth_metric_value(report, id))
      out.metric_rows.push_back(metric_row(frame.index, id, *v, e.model_id, e.task));
}

std::optional<EnvironmentMap> Pipeline::lighting_reference(const ProtocolEntry& e, const Frame& frame) {
  if (e.task_params.contains("gt_model")) {
    const auto id = e.task_params.at("gt_model").get<std::string>();
    auto ref = gateway_.infer(id, frame, manifest_);
    if (!std::holds_alternative<EnvironmentMap>(ref.prediction))
      throw Error(ErrorCode::SchemaMismatch, "gt_model '" + id + "' is not a lighting model");
    return std::get<EnvironmentMap>(std::move(ref.prediction));
  }
  if (!e.task_params.contains("gt")) return std::nullopt;
  const auto ref = e.task_params.at("gt").get<std::string>();
  if (const auto it = reference_cache_.find(ref); it != reference_cache_.end()) return it->second;
  fs::path path(ref);
  if (path.is_relative())
    for (const auto& dir : search_dirs_)
      if (fs::exists(dir / path)) {
        path = dir / path;
        break;
      }
  auto map = decode_pfm(read_file(path.string()));
  return reference_cache_.emplace(ref, std::move(map)).first->second;
}

void Pipeline::run_lighting_task(const ProtocolEntry& e, const Frame& frame, const EnvironmentMap& pred,
                                 EntryOutput& out) {
  if (!is_lighting_task(e.task))
    throw Error(ErrorCode::SchemaMismatch, "task " + to_string(e.task) + " needs a depth prediction");

  const int r = e.task_params.value("resolution", kDefaultProbeResolution);
  const double exponent = e.task_params.value("phong_exponent", 32.0);
  const auto reference = lighting_reference(e, frame);

  RgbImage image;
  if (e.task == Task::object_rendering) {
    const auto material = material_param(e.task_params);
    const auto& k = renderer_.intrinsics();
    render::RenderLayer merged(k.width, k.height);
    for (const auto& inst : renderer_.instances()) {
      const auto layer = lighting::relight_object(*inst.mesh, inst.pose, inst.scale, pred, material, frame.pose, k);
      for (std::size_t p = 0; p < merged.zbuffer.size(); ++p) {
        if (layer.color.values[p * 4 + 3] == 0 || !(layer.zbuffer[p] < merged.zbuffer[p])) continue;
        merged.zbuffer[p] = layer.zbuffer[p];
        std::copy_n(layer.color.values.begin() + p * 4, 4, merged.color.values.begin() + p * 4);
      }
    }
    image = render::composite(frame.rgb, merged, frame.depth, manifest_);
  } else if (e.task == Task::env_map_eval) {
    image = tonemap(pred.width, pred.height, pred.values);
  } else {
    std::vector<std::vector<lighting::ProbeRender>> rows(1);
    const lighting::ProbeMaterial materials[] = {lighting::ProbeMaterial::diffuse(),
                                                 lighting::ProbeMaterial::matte(exponent),
                                                 lighting::ProbeMaterial::mirror()};
    for (const auto& m : materials) rows[0].push_back(lighting::render_probe(pred, m, r));
    if (reference) {
      rows.emplace_back();
      for (const auto& m : materials) rows[1].push_back(lighting::render_probe(*reference, m, r));
    }
    image = probe_sheet(rows);
  }
  out.artifact = encode_png(image, PngSpeed::fast);
  out.extension = ".png";
  out.envelope =
      output_envelope(wire::MessageType::Composite, manifest_, frame.index, e.model_id, e.task, out.artifact);

  if (e.metric_ids.empty()) return;
  if (!reference) {
    spdlog::warn("{}: entry for {} lists metrics but no gt or gt_model", manifest_.session_id, e.model_id);
    return;
  }
  std::vector<metrics::LightingMetricReport> reports;
  if (e.task == Task::three_sphere)
    reports = metrics::three_sphere_eval(pred, *reference, r, exponent);
  else if (pred.width == reference->width && pred.height == reference->height)
    reports.push_back(metrics::lighting_metrics(metrics::LightingTarget::env_map, metrics::RadianceView::of(pred),
                                                metrics::RadianceView::of(*reference)));
  else
    throw Error(ErrorCode::DimensionMismatch, "predicted and reference environment maps differ in size");
  for (const auto& rep : reports)
    for (const auto& id : e.metric_ids)
      if (const auto v = metrics::lighting_metric_value(rep, id)) {
        const auto metric_id = e.task == Task::three_sphere ? metrics::to_string(rep.target) + "/" + id : id;
        out.metric_rows.push_back(metric_row(frame.index, metric_id, *v, e.model_id, e.task));
      }
}

Bytes Pipeline::point_cloud(const Frame& frame, const DepthMap& depth, int stride) {
  const auto real = pointcloud::unproject(depth, frame.rgb, manifest_.intrinsics, frame.pose, stride);
  pointcloud::ColoredPointSet virt;
  if (renderer_.has_meshes()) {
    const auto& layer = renderer_.render_objects(frame.pose, light_dir_param(Json::object()));
    virt = pointcloud::virtual_to_points(layer, manifest_.intrinsics, frame.pose, stride);
  }
  return pointcloud::encode_pcd(pointcloud::merge(real, virt));
}

}  // namespace edgeval::orchestrator
