// Copyright (c) the aerodetect authors
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

#include "aerodetect/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aerodetect/common.hpp"
#include "aerodetect/kernels.hpp"

namespace aerodetect {

namespace {

// Input scaling of the perceptual metric: [0,1] -> [-1,1] -> per-channel
// shift/scale as published with the metric's linear weights.
constexpr float kLpipsShift[3] = {-0.030f, -0.088f, -0.188f};
constexpr float kLpipsScale[3] = {0.458f, 0.448f, 0.450f};

// ImageNet statistics for the structural-texture distance backbone.
constexpr float kImagenetMean[3] = {0.485f, 0.456f, 0.406f};
constexpr float kImagenetStd[3] = {0.229f, 0.224f, 0.225f};

void check_same_dims(const Tensor3& a, const Tensor3& b) {
  if (!a.same_shape(b))
    throw UsageError("distance inputs differ in shape: " + std::to_string(a.w) + "x" +
                     std::to_string(a.h) + " vs " + std::to_string(b.w) + "x" +
                     std::to_string(b.h));
  if (a.c != 3) throw UsageError("distance inputs must have 3 channels");
}

Tensor3 lpips_normalize(const Tensor3& img) {
  Tensor3 out = img;
  const size_t plane = out.plane_size();
  for (int c = 0; c < 3; ++c) {
    const float a = 2.0f / kLpipsScale[c];
    const float b = (-1.0f - kLpipsShift[c]) / kLpipsScale[c];
    kern::active().scale_add(out.data() + c * plane, plane, a, b);
  }
  return out;
}

Tensor3 imagenet_normalize(const Tensor3& img) {
  Tensor3 out = img;
  const size_t plane = out.plane_size();
  for (int c = 0; c < 3; ++c) {
    const float a = 1.0f / kImagenetStd[c];
    const float b = -kImagenetMean[c] / kImagenetStd[c];
    kern::active().scale_add(out.data() + c * plane, plane, a, b);
  }
  return out;
}

// f /= (sqrt(sum_c f^2) + 1e-10), per spatial location.
void unit_normalize_channels(Tensor3& t) {
  const size_t plane = t.plane_size();
  std::vector<float> norm(plane, 0.0f);
  for (int c = 0; c < t.c; ++c) kern::active().sq_accum(t.plane(c), norm.data(), plane);
  for (size_t i = 0; i < plane; ++i) norm[i] = 1.0f / (std::sqrt(norm[i]) + 1e-10f);
  for (int c = 0; c < t.c; ++c) kern::active().mul_rows(t.plane(c), norm.data(), plane);
}

struct StageTerm {
  double value = 0.0;
  Tensor3 map;  // (1, sh, sw), only filled when a map is requested
};

// Per-stage channel-weighted squared feature differences, spatially averaged.
std::vector<StageTerm> lpips_stage_terms(Backbone bb, const WeightBundle& wb, const Tensor3& a,
                                         const Tensor3& b, const std::vector<int>& stages,
                                         bool want_map) {
  const Tensor3 na = lpips_normalize(a);
  const Tensor3 nb = lpips_normalize(b);
  const int max_stage = *std::max_element(stages.begin(), stages.end());
  std::vector<Tensor3> fa = extract_features(bb, wb, na, max_stage);
  std::vector<Tensor3> fb = extract_features(bb, wb, nb, max_stage);

  std::vector<StageTerm> terms;
  for (int s : stages) {
    Tensor3& xa = fa[s - 1];
    Tensor3& xb = fb[s - 1];
    unit_normalize_channels(xa);
    unit_normalize_channels(xb);
    const NamedTensor& lin = wb.tensor("lin." + std::to_string(s - 1) + ".weight");
    if (static_cast<int>(lin.data.size()) != xa.c)
      throw IoError("linear weight size mismatch at stage " + std::to_string(s));
    const size_t plane = xa.plane_size();
    Tensor3 map(1, xa.h, xa.w, 0.0f);
    for (int c = 0; c < xa.c; ++c)
      kern::active().wsqdiff_accum(xa.plane(c), xb.plane(c), lin.data[c], map.data(), plane);
    StageTerm t;
    t.value = kern::active().sum(map.data(), plane) / static_cast<double>(plane);
    if (want_map) t.map = std::move(map);
    terms.push_back(std::move(t));
  }
  return terms;
}

// Upsample each stage map to (h, w) and sum. Bilinear interpolation does not
// preserve the spatial mean exactly at borders, so each stage is rescaled to
// keep the map consistent with the scalar reduction.
Tensor3 combine_stage_maps(const std::vector<StageTerm>& terms, int h, int w) {
  Tensor3 out(1, h, w, 0.0f);
  Tensor3 up(1, h, w);
  for (const StageTerm& t : terms) {
    kern::resize_bilinear(t.map.data(), t.map.h, t.map.w, up.data(), h, w);
    const double m = kern::active().sum(up.data(), up.size()) / static_cast<double>(up.size());
    const float fix = (m > 0.0) ? static_cast<float>(t.value / m) : 0.0f;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += fix * up.v[i];
  }
  return out;
}

DistanceResult lpips_distance(const MetricSpec& spec, const DistanceCalculator& calc,
                              const Tensor3& a, const Tensor3& b, bool want_map) {
  const Backbone bb = *spec.backbone;
  if (std::min(a.h, a.w) < backbone_min_input(bb))
    throw UsageError("input " + std::to_string(a.w) + "x" + std::to_string(a.h) +
                     " is below the backbone's minimum footprint of " +
                     std::to_string(backbone_min_input(bb)) + "x" +
                     std::to_string(backbone_min_input(bb)));
  std::vector<int> stages = spec.layers;
  if (stages.empty()) {
    stages.resize(backbone_num_stages(bb));
    for (size_t i = 0; i < stages.size(); ++i) stages[i] = static_cast<int>(i) + 1;
  }
  const WeightBundle& wb = calc.bundle(bb);
  const std::vector<StageTerm> terms = lpips_stage_terms(bb, wb, a, b, stages, want_map);

  DistanceResult r;
  r.metric_id = spec.metric_id;
  for (const StageTerm& t : terms) r.value += t.value;
  if (want_map) r.map = combine_stage_maps(terms, a.h, a.w);
  return r;
}

DistanceResult dists_distance(const MetricSpec& spec, const DistanceCalculator& calc,
                              const Tensor3& a, const Tensor3& b) {
  if (std::min(a.h, a.w) < backbone_min_input(Backbone::kVgg16))
    throw UsageError("input below the backbone's minimum footprint of 32x32");
  const WeightBundle& wb = calc.bundle(Backbone::kVgg16);
  const NamedTensor& alpha = wb.tensor("dists.alpha");
  const NamedTensor& beta = wb.tensor("dists.beta");

  std::vector<Tensor3> fa = extract_features_vgg_l2pool(wb, imagenet_normalize(a));
  std::vector<Tensor3> fb = extract_features_vgg_l2pool(wb, imagenet_normalize(b));
  // stage 0 is the raw input
  std::vector<const Tensor3*> xs{&a}, ys{&b};
  for (auto& t : fa) xs.push_back(&t);
  for (auto& t : fb) ys.push_back(&t);

  double wsum = 0.0;
  for (float v : alpha.data) wsum += v;
  for (float v : beta.data) wsum += v;
  if (wsum == 0.0) throw IoError("structural-texture weights sum to zero");

  constexpr double c1 = 1e-6, c2 = 1e-6;
  double dist = 0.0;
  size_t ch_off = 0;
  for (size_t s = 0; s < xs.size(); ++s) {
    const Tensor3& x = *xs[s];
    const Tensor3& y = *ys[s];
    const size_t plane = x.plane_size();
    for (int c = 0; c < x.c; ++c) {
      const float* px = x.plane(c);
      const float* py = y.plane(c);
      const double n = static_cast<double>(plane);
      // one fused pass so identical inputs give identical moments
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (size_t i = 0; i < plane; ++i) {
        const double xv = px[i], yv = py[i];
        sx += xv;
        sy += yv;
        sxx += xv * xv;
        syy += yv * yv;
        sxy += xv * yv;
      }
      const double mx = sx / n, my = sy / n;
      const double vx = sxx / n - mx * mx;
      const double vy = syy / n - my * my;
      const double cov = sxy / n - mx * my;
      const double sl = (2 * mx * my + c1) / (mx * mx + my * my + c1);
      const double st = (2 * cov + c2) / (vx + vy + c2);
      dist += (alpha.data[ch_off + c] / wsum) * sl + (beta.data[ch_off + c] / wsum) * st;
    }
    ch_off += static_cast<size_t>(x.c);
  }
  if (ch_off != alpha.data.size() || alpha.data.size() != beta.data.size())
    throw IoError("structural-texture weight size mismatch");

  DistanceResult r;
  r.metric_id = spec.metric_id;
  r.value = std::max(0.0, 1.0 - dist);  // both terms are at most 1 exactly
  return r;
}

void gaussian_taps(float sigma, int radius, std::vector<float>& taps) {
  taps.assign(2 * radius + 1, 0.0f);
  double s = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * (t * t) / (sigma * sigma));
    taps[t + radius] = static_cast<float>(v);
    s += v;
  }
  for (float& v : taps) v = static_cast<float>(v / s);
}

// Gaussian-windowed local statistics with replicated borders.
void blur_plane(const float* in, float* out, int h, int w, const std::vector<float>& taps,
                int radius, float* scratch) {
  kern::active().sep_conv_h(in, scratch, h, w, taps.data(), radius);
  kern::active().sep_conv_v(scratch, out, h, w, taps.data(), radius);
}

// Returns the mean local SSIM; fills `map` (channel-mean local SSIM) when
// non-null. 11x11 Gaussian window, sigma 1.5, C1/C2 for unit dynamic range.
double ssim_mean(const Tensor3& a, const Tensor3& b, Tensor3* map) {
  constexpr int kRadius = 5;
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  std::vector<float> taps;
  gaussian_taps(1.5f, kRadius, taps);

  const int h = a.h, w = a.w;
  const size_t plane = a.plane_size();
  std::vector<float> mua(plane), mub(plane), saa(plane), sbb(plane), sab(plane), tmp(plane),
      scratch(plane);
  if (map) *map = Tensor3(1, h, w, 0.0f);

  double total = 0.0;
  for (int c = 0; c < a.c; ++c) {
    const float* pa = a.plane(c);
    const float* pb = b.plane(c);
    blur_plane(pa, mua.data(), h, w, taps, kRadius, scratch.data());
    blur_plane(pb, mub.data(), h, w, taps, kRadius, scratch.data());
    for (size_t i = 0; i < plane; ++i) tmp[i] = pa[i] * pa[i];
    blur_plane(tmp.data(), saa.data(), h, w, taps, kRadius, scratch.data());
    for (size_t i = 0; i < plane; ++i) tmp[i] = pb[i] * pb[i];
    blur_plane(tmp.data(), sbb.data(), h, w, taps, kRadius, scratch.data());
    for (size_t i = 0; i < plane; ++i) tmp[i] = pa[i] * pb[i];
    blur_plane(tmp.data(), sab.data(), h, w, taps, kRadius, scratch.data());

    double csum = 0.0;
    for (size_t i = 0; i < plane; ++i) {
      const double ma = mua[i], mb = mub[i];
      const double va = saa[i] - ma * ma;
      const double vb = sbb[i] - mb * mb;
      const double cov = sab[i] - ma * mb;
      const double s =
          ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      csum += s;
      if (map) map->v[i] += static_cast<float>(s / a.c);
    }
    total += csum / static_cast<double>(plane);
  }
  return total / a.c;
}

// Contrast-structure term only (multiscale intermediate scales).
double ssim_cs_mean(const Tensor3& a, const Tensor3& b) {
  constexpr int kRadius = 5;
  constexpr double kC2 = 0.03 * 0.03;
  std::vector<float> taps;
  gaussian_taps(1.5f, kRadius, taps);
  const int h = a.h, w = a.w;
  const size_t plane = a.plane_size();
  std::vector<float> mua(plane), mub(plane), saa(plane), sbb(plane), sab(plane), tmp(plane),
      scratch(plane);
  double total = 0.0;
  for (int c = 0; c < a.c; ++c) {
    const float* pa = a.plane(c);
    const float* pb = b.plane(c);
    blur_plane(pa, mua.data(), h, w, taps, kRadius, scratch.data());
    blur_plane(pb, mub.data(), h, w, taps, kRadius, scratch.data());
    for (size_t i = 0; i < plane; ++i) tmp[i] = pa[i] * pa[i];
    blur_plane(tmp.data(), saa.data(), h, w, taps, kRadius, scratch.data());
    for (size_t i = 0; i < plane; ++i) tmp[i] = pb[i] * pb[i];
    blur_plane(tmp.data(), sbb.data(), h, w, taps, kRadius, scratch.data());
    for (size_t i = 0; i < plane; ++i) tmp[i] = pa[i] * pb[i];
    blur_plane(tmp.data(), sab.data(), h, w, taps, kRadius, scratch.data());
    double csum = 0.0;
    for (size_t i = 0; i < plane; ++i) {
      const double ma = mua[i], mb = mub[i];
      const double va = saa[i] - ma * ma;
      const double vb = sbb[i] - mb * mb;
      const double cov = sab[i] - ma * mb;
      csum += (2 * cov + kC2) / (va + vb + kC2);
    }
    total += csum / static_cast<double>(plane);
  }
  return total / a.c;
}

Tensor3 downsample2x(const Tensor3& t) {
  Tensor3 out(t.c, t.h / 2, t.w / 2);
  kern::avgpool2x2(t.data(), t.c, t.h, t.w, out.data());
  return out;
}

}  // namespace

DistanceResult mse_distance(const Tensor3& a, const Tensor3& b, bool want_map) {
  check_same_dims(a, b);
  DistanceResult r;
  r.metric_id = "mse";
  r.value = kern::active().sqdiff_sum(a.data(), b.data(), a.size()) /
            static_cast<double>(a.size());
  if (want_map) {
    Tensor3 map(1, a.h, a.w, 0.0f);
    const size_t plane = a.plane_size();
    const float wc = 1.0f / static_cast<float>(a.c);
    for (int c = 0; c < a.c; ++c)
      kern::active().wsqdiff_accum(a.plane(c), b.plane(c), wc, map.data(), plane);
    r.map = std::move(map);
  }
  return r;
}

DistanceResult ssim_distance(const Tensor3& a, const Tensor3& b, bool want_map) {
  check_same_dims(a, b);
  if (std::min(a.h, a.w) < 11)
    throw UsageError("ssim needs at least 11x11 input, got " + std::to_string(a.w) + "x" +
                     std::to_string(a.h));
  DistanceResult r;
  r.metric_id = "ssim";
  Tensor3 map;
  const double sim = ssim_mean(a, b, want_map ? &map : nullptr);
  r.value = 1.0 - sim;
  if (want_map) {
    for (float& v : map.v) v = 1.0f - v;
    r.map = std::move(map);
  }
  return r;
}

DistanceResult msssim_distance(const Tensor3& a, const Tensor3& b) {
  check_same_dims(a, b);
  if (std::min(a.h, a.w) < 161)
    throw UsageError("ms-ssim needs a minimum dimension of 161 for five dyadic scales, got " +
                     std::to_string(a.w) + "x" + std::to_string(a.h));
  static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  Tensor3 xa = a, xb = b;
  double prod = 1.0;
  for (int scale = 0; scale < 5; ++scale) {
    if (scale < 4) {
      const double cs = std::max(0.0, ssim_cs_mean(xa, xb));
      prod *= std::pow(cs, kWeights[scale]);
      xa = downsample2x(xa);
      xb = downsample2x(xb);
    } else {
      const double sim = std::max(0.0, ssim_mean(xa, xb, nullptr));
      prod *= std::pow(sim, kWeights[scale]);
    }
  }
  DistanceResult r;
  r.metric_id = "ms-ssim";
  r.value = 1.0 - std::min(prod, 1.0);
  return r;
}

MetricSpec parse_metric_id(const std::string& id) {
  MetricSpec spec;
  spec.metric_id = id;
  if (id == "mse") {
    spec.family = MetricFamily::kMse;
    return spec;
  }
  if (id == "ssim") {
    spec.family = MetricFamily::kSsim;
    return spec;
  }
  if (id == "ms-ssim") {
    spec.family = MetricFamily::kMsSsim;
    return spec;
  }
  if (id == "dists") {
    spec.family = MetricFamily::kDists;
    spec.backbone = Backbone::kVgg16;
    return spec;
  }
  if (id.rfind("lpips-", 0) == 0) {
    const std::string rest = id.substr(6);
    const size_t dash = rest.rfind('-');
    if (dash != std::string::npos) {
      const std::string bbname = rest.substr(0, dash);
      const std::string sel = rest.substr(dash + 1);
      Backbone bb;
      try {
        bb = backbone_from_name(bbname);
      } catch (const UsageError&) {
        goto unknown;
      }
      spec.family = MetricFamily::kLpips;
      spec.backbone = bb;
      if (sel == "all") return spec;
      if (sel.size() >= 2 && sel[0] == 'l') {
        const int layer = std::atoi(sel.c_str() + 1);
        if (layer >= 1 && layer <= backbone_num_stages(bb)) {
          spec.layers = {layer};
          return spec;
        }
      }
    }
  }
unknown : {
  std::ostringstream msg;
  msg << "unknown metric '" << id << "'; registered metrics:";
  for (const auto& m : registered_metric_ids()) msg << " " << m;
  throw UsageError(msg.str());
}
}

std::vector<std::string> registered_metric_ids() {
  std::vector<std::string> out;
  for (Backbone bb : {Backbone::kVgg16, Backbone::kAlexNet, Backbone::kSqueezeNet}) {
    out.push_back("lpips-" + backbone_name(bb) + "-all");
    for (int i = 1; i <= backbone_num_stages(bb); ++i)
      out.push_back("lpips-" + backbone_name(bb) + "-l" + std::to_string(i));
  }
  out.push_back("dists");
  out.push_back("mse");
  out.push_back("ssim");
  out.push_back("ms-ssim");
  return out;
}

bool metric_supports_map(const MetricSpec& spec) {
  return spec.family == MetricFamily::kLpips || spec.family == MetricFamily::kMse ||
         spec.family == MetricFamily::kSsim;
}

DistanceCalculator::DistanceCalculator(std::filesystem::path weights_dir)
    : weights_dir_(std::move(weights_dir)) {}

const WeightBundle& DistanceCalculator::bundle(Backbone b) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(b);
  if (it != cache_.end()) return *it->second;
  const std::filesystem::path path = weights_dir_ / (backbone_name(b) + ".abw");
  if (!std::filesystem::exists(path))
    throw IoError("backbone weights unavailable: " + path.string() +
                  " (generate with tools/export_weights.py)");
  auto loaded = std::make_shared<WeightBundle>(WeightBundle::load(path));
  auto [pos, _] = cache_.emplace(b, std::move(loaded));
  return *pos->second;
}

DistanceResult DistanceCalculator::distance(const MetricSpec& spec, const Tensor3& a,
                                            const Tensor3& b, bool want_map) const {
  check_same_dims(a, b);
  DistanceResult r;
  switch (spec.family) {
    case MetricFamily::kMse:
      r = mse_distance(a, b, want_map);
      break;
    case MetricFamily::kSsim:
      r = ssim_distance(a, b, want_map);
      break;
    case MetricFamily::kMsSsim:
      if (want_map) throw UsageError("metric 'ms-ssim' does not produce spatial maps");
      r = msssim_distance(a, b);
      break;
    case MetricFamily::kDists:
      if (want_map) throw UsageError("metric 'dists' does not produce spatial maps");
      r = dists_distance(spec, *this, a, b);
      break;
    case MetricFamily::kLpips:
      r = lpips_distance(spec, *this, a, b, want_map);
      break;
  }
  r.metric_id = spec.metric_id;
  return r;
}

DistanceResult DistanceCalculator::distance(const std::string& metric_id, const Tensor3& a,
                                            const Tensor3& b, bool want_map) const {
  return distance(parse_metric_id(metric_id), a, b, want_map);
}

}  // namespace aerodetect
