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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/gateway.hpp"
#include "edgeval/render.hpp"
#include "edgeval/wire.hpp"

namespace edgeval::orchestrator {

struct ObjectOverride {
  Pose pose;
  double scale = 1.0;
};

/// Viewer-controlled state. Changes apply from the next processed frame.
struct InteractiveState {
  std::optional<double> plane_depth_m;  // nullopt = per-entry / manifest default
  std::map<std::string, ObjectOverride> objects;
  std::optional<std::vector<std::string>> selected_models;  // nullopt = all entries
};

/// Result of one protocol entry on one frame.
struct EntryOutput {
  std::size_t entry_index = 0;
  std::string model_id;
  Task task = Task::occlusion_plane;
  std::optional<ErrorCode> error;
  std::string error_message;

  wire::Envelope envelope;  // COMPOSITE, POINTCLOUD or ERROR
  std::optional<gateway::Prediction> prediction;
  Bytes artifact;           // composite PNG or PCD bytes; empty on error
  std::string extension;    // ".png" or ".pcd"
  std::vector<Json> metric_rows;
  double inference_ms = 0.0;
};

struct FrameOutputs {
  std::uint64_t frame_index = 0;
  std::vector<EntryOutput> entries;
};

/// Checks entries against the gateway and metric registry. Throws
/// InvalidProtocol or UnknownModel.
void validate_protocol(const ExperimentProtocol& p, const gateway::Gateway& gw);

/// Per-session evaluation pipeline: infer, run task, score, encode. Owned by
/// a single rendering worker. Output bytes depend only on the frame, the
/// protocol and the interactive state.
class Pipeline {
 public:
  Pipeline(SessionManifest manifest, const gateway::Gateway& gw, ExperimentProtocol protocol,
           std::vector<std::filesystem::path> search_dirs = {});

  const SessionManifest& manifest() const { return manifest_; }
  const ExperimentProtocol& protocol() const { return protocol_; }
  const InteractiveState& state() const { return state_; }
  const render::Renderer& renderer() const { return renderer_; }

  /// Mutates interactive state for set_plane_depth, set_object_pose and
  /// select_models; other commands are ignored here. Throws NoSuchSession
  /// on a session mismatch and PreconditionViolation for an unknown object.
  void apply_control(const wire::ControlCommand& cmd);

  FrameOutputs process_frame(const Frame& frame);

  /// Merged sensor-or-predicted cloud plus the virtual layer, as PCD.
  Bytes point_cloud(const Frame& frame, const DepthMap& depth, int stride);

 private:
  EntryOutput run_entry(std::size_t i, const ProtocolEntry& e, const Frame& frame);
  void run_depth_task(const ProtocolEntry& e, const Frame& frame, const DepthMap& pred, EntryOutput& out);
  void run_lighting_task(const ProtocolEntry& e, const Frame& frame, const EnvironmentMap& pred, EntryOutput& out);
  std::optional<EnvironmentMap> lighting_reference(const ProtocolEntry& e, const Frame& frame);
  double plane_depth_for(const ProtocolEntry& e) const;
  bool selected(const std::string& model_id) const;

  SessionManifest manifest_;
  const gateway::Gateway& gateway_;
  ExperimentProtocol protocol_;
  std::vector<std::filesystem::path> search_dirs_;
  render::Renderer renderer_;
  InteractiveState state_;
  std::map<std::string, EnvironmentMap> reference_cache_;
};

Json metric_row(std::uint64_t frame_index, const std::string& metric_id, double value, const std::string& model_id,
                Task task);

}  // namespace edgeval::orchestrator
