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

#include "edgeval/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

#include "edgeval/error.hpp"

namespace edgeval::metrics {

namespace {

void check_same_size(const DepthMap& a, const DepthMap& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error(ErrorCode::DimensionMismatch, std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                                                  std::to_string(b.width) + "x" + std::to_string(b.height));
}

void check_same_size(RadianceView pred, RadianceView gt) {
  if (pred.rgb.size() != gt.rgb.size() || pred.rgb.size() % 3 != 0)
    throw Error(ErrorCode::DimensionMismatch, "radiance images differ in size");
  if (!gt.mask.empty() && gt.mask.size() * 3 != gt.rgb.size())
    throw Error(ErrorCode::DimensionMismatch, "mask size mismatch");
  if (!pred.mask.empty() && pred.mask.size() * 3 != pred.rgb.size())
    throw Error(ErrorCode::DimensionMismatch, "mask size mismatch");
}

bool use_pixel(RadianceView pred, RadianceView gt, std::size_t i) {
  return (gt.mask.empty() || gt.mask[i]) && (pred.mask.empty() || pred.mask[i]);
}

double rmse_scaled(RadianceView pred, RadianceView gt, double s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.rgb.size() / 3; ++i) {
    if (!use_pixel(pred, gt, i)) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = s * pred.rgb[i * 3 + c] - gt.rgb[i * 3 + c];
      sum += d * d;
    }
    n += 3;
  }
  if (n == 0) throw Error(ErrorCode::DegenerateInput, "no pixels to compare");
  return std::sqrt(sum / static_cast<double>(n));
}

bool gt_is_zero(RadianceView pred, RadianceView gt) {
  for (std::size_t i = 0; i < gt.rgb.size() / 3; ++i)
    if (use_pixel(pred, gt, i) && (gt.rgb[i * 3] != 0 || gt.rgb[i * 3 + 1] != 0 || gt.rgb[i * 3 + 2] != 0))
      return false;
  return true;
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(Bytes& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::span<const std::uint8_t> s, std::size_t at) {
  return static_cast<std::uint32_t>(s[at]) | static_cast<std::uint32_t>(s[at + 1]) << 8 |
         static_cast<std::uint32_t>(s[at + 2]) << 16 | static_cast<std::uint32_t>(s[at + 3]) << 24;
}

}  // namespace

// ---------------------------------------------------------------- depth

DepthMetricReport depth_metrics(const DepthMap& pred, const DepthMap& gt) {
  check_same_size(pred, gt);
  DepthMetricReport r;
  double sq = 0.0, rel = 0.0;
  std::uint64_t d1 = 0, d2 = 0, d3 = 0, n = 0;
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (pred.values[i] == 0 || gt.values[i] == 0) continue;
    const double p = to_meters(pred.values[i]);
    const double g = to_meters(gt.values[i]);
    const double diff = p - g;
    sq += diff * diff;
    rel += std::abs(diff) / g;
    const double ratio = std::max(p / g, g / p);
    d1 += ratio < t1;
    d2 += ratio < t2;
    d3 += ratio < t3;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::NoValidPixels, "no pixel is valid in both maps");
  const double inv = 1.0 / static_cast<double>(n);
  r.valid_pixel_count = n;
  r.mse = sq * inv;
  r.rmse = std::sqrt(r.mse);
  r.absrel = rel * inv;
  r.delta1 = static_cast<double>(d1) * inv;
  r.delta2 = static_cast<double>(d2) * inv;
  r.delta3 = static_cast<double>(d3) * inv;
  return r;
}

DepthMetricReport depth_metrics_resized(const DepthMap& pred, const DepthMap& gt) {
  return depth_metrics(resize_nearest(pred, gt.width, gt.height), gt);
}

// ---------------------------------------------------------------- temporal

Bytes encode_flow(const FlowField& f) {
  Bytes out;
  out.reserve(8 + f.du.size() * 12);
  put_u32(out, static_cast<std::uint32_t>(f.width));
  put_u32(out, static_cast<std::uint32_t>(f.height));
  for (std::size_t i = 0; i < f.du.size(); ++i) {
    put_f32(out, f.du[i]);
    put_f32(out, f.dv[i]);
    put_f32(out, f.valid[i] ? 1.0f : 0.0f);
  }
  return out;
}

FlowField decode_flow(std::span<const std::uint8_t> data) {
  if (data.size() < 8) throw Error(ErrorCode::Truncated, "flow header truncated");
  const auto w = get_u32(data, 0), h = get_u32(data, 4);
  if (data.size() != 8 + static_cast<std::size_t>(w) * h * 12)
    throw Error(ErrorCode::DimensionMismatch, "flow payload size mismatch");
  FlowField f(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < f.du.size(); ++i) {
    const std::size_t at = 8 + i * 12;
    f.du[i] = std::bit_cast<float>(get_u32(data, at));
    f.dv[i] = std::bit_cast<float>(get_u32(data, at + 4));
    f.valid[i] = std::bit_cast<float>(get_u32(data, at + 8)) != 0.0f;
  }
  return f;
}

double warp_loss(const DepthMap& d_n, const DepthMap& d_prev, const FlowField& flow) {
  check_same_size(d_n, d_prev);
  if (flow.width != d_n.width || flow.height != d_n.height)
    throw Error(ErrorCode::DimensionMismatch, "flow field does not match depth maps");
  double sum = 0.0;
  std::uint64_t n = 0;
  for (int v = 0; v < d_n.height; ++v)
    for (int u = 0; u < d_n.width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * d_n.width + u;
      if (!flow.valid[i] || d_n.values[i] == 0) continue;
      const double tu = std::round(u + static_cast<double>(flow.du[i]));
      const double tv = std::round(v + static_cast<double>(flow.dv[i]));
      if (!(tu >= 0 && tv >= 0 && tu < d_n.width && tv < d_n.height)) continue;
      const auto prev = d_prev.at(static_cast<int>(tu), static_cast<int>(tv));
      if (prev == 0) continue;
      sum += std::abs(to_meters(d_n.values[i]) - to_meters(prev));
      ++n;
    }
  if (n == 0) throw Error(ErrorCode::NoValidPixels, "no pixel survives the warp");
  return sum / static_cast<double>(n);
}

TemporalReport opw(const std::vector<DepthMap>& depths, const std::vector<FlowField>& flows) {
  if (depths.size() < 2) throw Error(ErrorCode::TooFewFrames, "OPW needs at least 2 frames");
  if (flows.size() != depths.size() - 1)
    throw Error(ErrorCode::PreconditionViolation, "need exactly N-1 flow fields");
  TemporalReport r;
  r.frame_count = depths.size();
  double sum = 0.0;
  for (std::size_t n = 1; n < depths.size(); ++n) {
    r.pair_losses.push_back(warp_loss(depths[n], depths[n - 1], flows[n - 1]));
    sum += r.pair_losses.back();
  }
  r.opw = sum / static_cast<double>(depths.size() - 1);
  return r;
}

// ---------------------------------------------------------------- lighting

double env_rmse(RadianceView pred, RadianceView gt) {
  check_same_size(pred, gt);
  return rmse_scaled(pred, gt, 1.0);
}

double env_si_rmse(RadianceView pred, RadianceView gt) {
  check_same_size(pred, gt);
  if (gt_is_zero(pred, gt)) throw Error(ErrorCode::DegenerateInput, "ground truth is identically zero");
  double pg = 0.0, pp = 0.0;
  for (std::size_t i = 0; i < gt.rgb.size() / 3; ++i) {
    if (!use_pixel(pred, gt, i)) continue;
    for (int c = 0; c < 3; ++c) {
      const double p = pred.rgb[i * 3 + c];
      pg += p * gt.rgb[i * 3 + c];
      pp += p * p;
    }
  }
  const double s = pp > 0.0 ? pg / pp : 0.0;
  return rmse_scaled(pred, gt, s);
}

double env_angular(RadianceView pred, RadianceView gt) {
  check_same_size(pred, gt);
  if (gt_is_zero(pred, gt)) throw Error(ErrorCode::DegenerateInput, "ground truth is identically zero");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.rgb.size() / 3; ++i) {
    if (!use_pixel(pred, gt, i)) continue;
    const Vec3 a{pred.rgb[i * 3], pred.rgb[i * 3 + 1], pred.rgb[i * 3 + 2]};
    const Vec3 b{gt.rgb[i * 3], gt.rgb[i * 3 + 1], gt.rgb[i * 3 + 2]};
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) continue;
    // atan2 form of acos(clamp(a.b / |a||b|)); exact zero for colinear inputs.
    sum += std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / std::numbers::pi;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::DegenerateInput, "no pixel is nonzero in both images");
  return sum / static_cast<double>(n);
}

std::string to_string(LightingTarget t) {
  switch (t) {
    case LightingTarget::env_map: return "env_map";
    case LightingTarget::diffuse: return "diffuse";
    case LightingTarget::matte: return "matte";
    case LightingTarget::mirror: return "mirror";
  }
  return "unknown";
}

LightingMetricReport lighting_metrics(LightingTarget target, RadianceView pred, RadianceView gt) {
  LightingMetricReport r;
  r.target = target;
  r.angular_error_deg = env_angular(pred, gt);
  r.si_rmse = env_si_rmse(pred, gt);
  r.rmse = env_rmse(pred, gt);
  return r;
}

std::vector<LightingMetricReport> three_sphere_eval(const EnvironmentMap& pred, const EnvironmentMap& gt,
                                                    int resolution, double matte_exponent) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw Error(ErrorCode::DimensionMismatch, "environment maps differ in size");
  std::vector<LightingMetricReport> rows;
  rows.push_back(lighting_metrics(LightingTarget::env_map, RadianceView::of(pred), RadianceView::of(gt)));
  const std::pair<LightingTarget, lighting::ProbeMaterial> probes[] = {
      {LightingTarget::diffuse, lighting::ProbeMaterial::diffuse()},
      {LightingTarget::matte, lighting::ProbeMaterial::matte(matte_exponent)},
      {LightingTarget::mirror, lighting::ProbeMaterial::mirror()},
  };
  for (const auto& [target, material] : probes) {
    const auto p = lighting::render_probe(pred, material, resolution);
    const auto g = lighting::render_probe(gt, material, resolution);
    rows.push_back(lighting_metrics(target, RadianceView::of(p), RadianceView::of(g)));
  }
  return rows;
}

// ---------------------------------------------------------------- registry

const std::vector<MetricInfo>& registered_metrics() {
  static const std::vector<MetricInfo> metrics{
      {"rmse", MetricFamily::depth},          {"mse", MetricFamily::depth},
      {"absrel", MetricFamily::depth},        {"delta1", MetricFamily::depth},
      {"delta2", MetricFamily::depth},        {"delta3", MetricFamily::depth},
      {"angular_error", MetricFamily::lighting}, {"si_rmse", MetricFamily::lighting},
      {"rmse", MetricFamily::lighting},
  };
  return metrics;
}

bool is_registered_metric(const std::string& id) {
  const auto& all = registered_metrics();
  return std::any_of(all.begin(), all.end(), [&](const MetricInfo& m) { return m.id == id; });
}

std::optional<double> depth_metric_value(const DepthMetricReport& r, const std::string& id) {
  if (id == "rmse") return r.rmse;
  if (id == "mse") return r.mse;
  if (id == "absrel") return r.absrel;
  if (id == "delta1") return r.delta1;
  if (id == "delta2") return r.delta2;
  if (id == "delta3") return r.delta3;
  return std::nullopt;
}

std::optional<double> lighting_metric_value(const LightingMetricReport& r, const std::string& id) {
  if (id == "angular_error") return r.angular_error_deg;
  if (id == "si_rmse") return r.si_rmse;
  if (id == "rmse") return r.rmse;
  return std::nullopt;
}

Json to_json(const DepthMetricReport& r) {
  return Json{{"frame_index", r.frame_index}, {"valid_pixel_count", r.valid_pixel_count},
              {"rmse", r.rmse}, {"mse", r.mse}, {"absrel", r.absrel},
              {"delta1", r.delta1}, {"delta2", r.delta2}, {"delta3", r.delta3}};
}

Json to_json(const LightingMetricReport& r) {
  return Json{{"target", to_string(r.target)}, {"angular_error_deg", r.angular_error_deg},
              {"si_rmse", r.si_rmse}, {"rmse", r.rmse}};
}

}  // namespace edgeval::metrics
