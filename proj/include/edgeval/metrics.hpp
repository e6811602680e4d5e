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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgeval/core.hpp"
#include "edgeval/lighting.hpp"

namespace edgeval::metrics {

// ---------------------------------------------------------------- depth

struct DepthMetricReport {
  std::uint64_t frame_index = 0;
  std::uint64_t valid_pixel_count = 0;
  double rmse = 0.0;
  double mse = 0.0;
  double absrel = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

/// Errors over pixels where both maps are valid, in meters. No scale
/// alignment. Throws DimensionMismatch / NoValidPixels.
DepthMetricReport depth_metrics(const DepthMap& pred, const DepthMap& gt);

/// Same, after nearest-resizing `pred` onto the ground-truth grid.
DepthMetricReport depth_metrics_resized(const DepthMap& pred, const DepthMap& gt);

// ---------------------------------------------------------------- temporal

/// Backward flow from frame n to n-1: pixel p in frame n corresponds to
/// p + (du, dv) in frame n-1.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> du;
  std::vector<float> dv;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int w, int h, float fu = 0.0f, float fv = 0.0f)
      : width(w), height(h),
        du(static_cast<std::size_t>(w) * h, fu),
        dv(static_cast<std::size_t>(w) * h, fv),
        valid(static_cast<std::size_t>(w) * h, 1) {}
};

/// Flow file: width u32 LE, height u32 LE, then (du, dv, valid) float32 triples.
Bytes encode_flow(const FlowField& f);
FlowField decode_flow(std::span<const std::uint8_t> data);

struct TemporalReport {
  std::size_t frame_count = 0;
  std::vector<double> pair_losses;  // pair_losses[i] = L(i+1, i)
  double opw = 0.0;
};

/// Masked L1 between d_n and d_prev sampled at p + flow(p), rounded to the
/// nearest pixel. Meters.
double warp_loss(const DepthMap& d_n, const DepthMap& d_prev, const FlowField& flow);

/// Mean of warp losses over consecutive pairs; flows[i] maps frame i+1 to i.
TemporalReport opw(const std::vector<DepthMap>& depths, const std::vector<FlowField>& flows);

// ---------------------------------------------------------------- lighting

/// View over RGB triples with an optional per-pixel mask (nonzero = use).
struct RadianceView {
  std::span<const float> rgb;
  std::span<const std::uint8_t> mask;  // empty = all pixels

  static RadianceView of(const EnvironmentMap& m) { return {m.values, {}}; }
  static RadianceView of(const lighting::ProbeRender& p) { return {p.image, p.mask}; }
};

double env_rmse(RadianceView pred, RadianceView gt);
/// RMSE after scaling pred by s* = sum(pred*gt) / sum(pred^2) (0 if pred is 0).
double env_si_rmse(RadianceView pred, RadianceView gt);
/// Mean per-pixel angle in degrees between RGB vectors, over pixels where
/// both are nonzero.
double env_angular(RadianceView pred, RadianceView gt);

enum class LightingTarget { env_map, diffuse, matte, mirror };
std::string to_string(LightingTarget t);

struct LightingMetricReport {
  LightingTarget target = LightingTarget::env_map;
  double angular_error_deg = 0.0;
  double si_rmse = 0.0;
  double rmse = 0.0;
};

LightingMetricReport lighting_metrics(LightingTarget target, RadianceView pred, RadianceView gt);

/// Rows for env_map, diffuse, matte, mirror in that order. Probes compare
/// only pixels covered by the sphere.
std::vector<LightingMetricReport> three_sphere_eval(const EnvironmentMap& pred, const EnvironmentMap& gt,
                                                    int resolution, double matte_exponent = 32.0);

// ---------------------------------------------------------------- registry

enum class MetricFamily { depth, lighting };

struct MetricInfo {
  std::string id;
  MetricFamily family;
};

/// Metric ids usable in experiment protocols: rmse, mse, absrel, delta1,
/// delta2, delta3 (depth); angular_error, si_rmse, rmse (lighting).
const std::vector<MetricInfo>& registered_metrics();
bool is_registered_metric(const std::string& id);

/// Value of one depth metric id from a report (nullopt for unknown ids).
std::optional<double> depth_metric_value(const DepthMetricReport& r, const std::string& id);
std::optional<double> lighting_metric_value(const LightingMetricReport& r, const std::string& id);

Json to_json(const DepthMetricReport& r);
Json to_json(const LightingMetricReport& r);

}  // namespace edgeval::metrics
