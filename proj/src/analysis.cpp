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

#include "aerodetect/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "aerodetect/common.hpp"
#include "aerodetect/kernels.hpp"
#include "aerodetect/rng.hpp"

namespace aerodetect {

using nlohmann::json;

PatchGrid extract_patches(const Tensor3& px, int patch_size, int stride) {
  if (patch_size <= 0 || stride <= 0) throw UsageError("patch size and stride must be positive");
  if (px.h < patch_size || px.w < patch_size)
    throw UsageError("image " + std::to_string(px.w) + "x" + std::to_string(px.h) +
                     " is smaller than the patch size " + std::to_string(patch_size));
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = stride;
  const int rows = patch_count_1d(px.h, patch_size, stride);
  const int cols = patch_count_1d(px.w, patch_size, stride);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      PatchGrid::Item item;
      item.row = r;
      item.col = c;
      item.px = Tensor3(px.c, patch_size, patch_size);
      for (int ch = 0; ch < px.c; ++ch)
        for (int y = 0; y < patch_size; ++y)
          std::copy_n(&px.at(ch, r * stride + y, c * stride), patch_size,
                      &item.px.at(ch, y, 0));
      grid.patches.push_back(std::move(item));
    }
  return grid;
}

size_t patch_complexity_bytes(const Tensor3& patch) {
  if (patch.c != 3) throw UsageError("complexity proxy expects a 3-channel patch");
  return encode_jpeg(patch, 50).size();
}

double spearman_rho(const std::vector<std::pair<double, double>>& xy) {
  const size_t n = xy.size();
  if (n < 3) throw UsageError("rank correlation needs at least 3 points");
  auto ranks = [&](auto key) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return key(a) < key(b); });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j < n && key(idx[j]) == key(idx[i])) ++j;
      const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j - 1)) + 1.0;
      for (size_t k = i; k < j; ++k) r[idx[k]] = mid;  // ties get the mid-rank
      i = j;
    }
    return r;
  };
  const std::vector<double> rx = ranks([&](size_t i) { return xy[i].first; });
  const std::vector<double> ry = ranks([&](size_t i) { return xy[i].second; });
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

ComplexityResult complexity_scatter(const std::vector<ManifestRecord>& manifest,
                                    const std::vector<std::shared_ptr<AEBackend>>& backends,
                                    const DistanceCalculator& calc, const MetricSpec& spec,
                                    const ReconCache& cache, int patch_size, int stride,
                                    int workers) {
  if (manifest.empty()) throw UsageError("manifest is empty");

  struct Task {
    ManifestRecord rec;
    ImageTensor patch;
    int row, col;
  };
  std::vector<Task> tasks;
  for (const auto& rec : manifest) {
    try {
      const ImageTensor img = prepare_for_ae(load_image(rec.path));
      PatchGrid grid = extract_patches(img.px, patch_size, stride);
      for (auto& p : grid.patches) {
        Task t;
        t.rec = rec;
        t.row = p.row;
        t.col = p.col;
        t.patch.px = std::move(p.px);
        t.patch.source_path = rec.path;
        t.patch.content_hash = content_hash_of(t.patch.px);
        tasks.push_back(std::move(t));
      }
    } catch (const std::exception& e) {
      AD_WARN("skipping %s: %s", rec.path.c_str(), e.what());
    }
  }
  if (tasks.empty()) throw UsageError("no patches could be extracted from the manifest");

  std::vector<ComplexityPoint> points(tasks.size());
  std::vector<char> ok(tasks.size(), 0);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const DetectionScore ds = delta_min(backends, calc, spec, tasks[i].patch, cache);
        ComplexityPoint p;
        p.complexity = patch_complexity_bytes(tasks[i].patch.px);
        p.error = ds.min_value;
        p.label = tasks[i].rec.label;
        p.dataset = tasks[i].rec.dataset;
        p.path = tasks[i].rec.path;
        p.row = tasks[i].row;
        p.col = tasks[i].col;
        points[i] = std::move(p);
        ok[i] = 1;
      } catch (const std::exception& e) {
        AD_WARN("complexity: skipping patch of %s: %s", tasks[i].rec.path.c_str(), e.what());
      }
    }
  };
  const int nthreads = std::max(1, workers);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ComplexityResult res;
  std::vector<std::pair<double, double>> real_xy, gen_xy;
  for (size_t i = 0; i < tasks.size(); ++i) {
    if (!ok[i]) continue;
    res.points.push_back(points[i]);
    const auto xy = std::make_pair(static_cast<double>(points[i].complexity), points[i].error);
    (points[i].label == Label::kReal ? real_xy : gen_xy).push_back(xy);
  }
  if (real_xy.size() >= 3) res.rho_real = spearman_rho(real_xy);
  if (gen_xy.size() >= 3) res.rho_generated = spearman_rho(gen_xy);
  return res;
}

ErrorHeatmap localization_heatmap(const AEBackend& backend, const DistanceCalculator& calc,
                                  const MetricSpec& spec, const ImageTensor& img,
                                  const ReconCache& cache) {
  if (!metric_supports_map(spec))
    throw UsageError("metric '" + spec.metric_id + "' does not produce spatial maps");
  const ImageTensor rec = reconstruct_cached(backend, img, cache);
  DistanceResult d = calc.distance(spec, img.px, rec.px, /*want_map=*/true);
  ErrorHeatmap hm;
  hm.map = std::move(*d.map);
  hm.ae_id = backend.ae_id();
  hm.metric_id = spec.metric_id;
  kern::min_max(hm.map.data(), hm.map.size(), &hm.norm_lo, &hm.norm_hi);
  return hm;
}

void save_heatmap_png(const ErrorHeatmap& hm, const std::filesystem::path& path) {
  save_gray_png8(hm.map, hm.norm_lo, hm.norm_hi, path);
}

void save_heatmap_raw(const ErrorHeatmap& hm, const std::filesystem::path& path) {
  json j{{"ae_id", hm.ae_id},
         {"metric_id", hm.metric_id},
         {"height", hm.map.h},
         {"width", hm.map.w},
         {"normalization", {{"lo", hm.norm_lo}, {"hi", hm.norm_hi}}},
         {"values", hm.map.v}};
  atomic_write(path, j.dump());
}

// ---- deeper reconstructions ----

std::vector<double> ddim_alpha_bars() {
  // scaled-linear schedule: sqrt(beta) linear from sqrt(0.00085) to
  // sqrt(0.012) over 1000 training steps
  constexpr int kSteps = 1000;
  const double b0 = std::sqrt(0.00085), b1 = std::sqrt(0.012);
  std::vector<double> abar(kSteps);
  double prod = 1.0;
  for (int t = 0; t < kSteps; ++t) {
    const double sb = b0 + (b1 - b0) * t / (kSteps - 1);
    prod *= 1.0 - sb * sb;
    abar[t] = prod;
  }
  return abar;
}

std::vector<int> ddim_timesteps(int total_steps) {
  if (total_steps < 1 || total_steps > 1000)
    throw UsageError("total_steps must be in [1,1000]");
  const int ratio = 1000 / total_steps;
  std::vector<int> ts(total_steps);
  for (int i = 0; i < total_steps; ++i) ts[i] = i * ratio + 1;  // leading spacing, offset 1
  return ts;
}

namespace {

class ZeroDenoiser final : public LatentDenoiser {
 public:
  std::string id() const override { return "stub-zero"; }
  Tensor3 predict_noise(const Tensor3& z, int, const std::string&) const override {
    return Tensor3(z.c, z.h, z.w, 0.0f);
  }
};

// Deterministic pseudo-noise keyed by timestep, prompt and the latent
// itself; the latent term keeps inversion and denoising from cancelling
// exactly, so the loop is exercised for real.
class MixDenoiser final : public LatentDenoiser {
 public:
  std::string id() const override { return "stub-mix"; }
  Tensor3 predict_noise(const Tensor3& z, int timestep, const std::string& prompt) const override {
    Tensor3 eps(z.c, z.h, z.w);
    Rng rng(seed_from(prompt, mix_seed(0x9e1u ^ static_cast<uint64_t>(timestep))));
    for (size_t i = 0; i < eps.size(); ++i)
      eps.v[i] = static_cast<float>(0.1 * rng.normal() + 0.2 * std::tanh(z.v[i]));
    return eps;
  }
};

}  // namespace

std::shared_ptr<LatentDenoiser> make_stub_denoiser(const std::string& id) {
  if (id == "stub-zero") return std::make_shared<ZeroDenoiser>();
  if (id == "stub-mix") return std::make_shared<MixDenoiser>();
  throw UsageError("unknown stub denoiser '" + id + "' (known: stub-zero, stub-mix)");
}

ImageTensor deep_reconstruct(const AEBackend& backend, const LatentDenoiser* denoiser,
                             const ImageTensor& img, int t, int total_steps,
                             const std::string& prompt) {
  if (t == 0) return backend.reconstruct(img);  // definitional reduction
  if (t < 0 || t > total_steps)
    throw UsageError("t must be in [0," + std::to_string(total_steps) + "], got " +
                     std::to_string(t));
  if (denoiser == nullptr)
    throw UsageError("no denoiser available for backend '" + backend.ae_id() +
                     "'; deeper reconstructions need the latent denoiser weights");

  const std::vector<double> abar = ddim_alpha_bars();
  const std::vector<int> ts = ddim_timesteps(total_steps);

  Tensor3 z = backend.encode(img.px);
  const double scale = denoiser->latent_scale();
  if (scale != 1.0) kern::active().scale_add(z.data(), z.size(), static_cast<float>(scale), 0.0f);

  auto ddim_jump = [&](Tensor3& zt, const Tensor3& eps, double a_from, double a_to) {
    // x0 = (z - sqrt(1-a_from) eps) / sqrt(a_from);  z' = sqrt(a_to) x0 + sqrt(1-a_to) eps
    const double s_from = std::sqrt(1.0 - a_from), s_to = std::sqrt(1.0 - a_to);
    const double r = std::sqrt(a_to) / std::sqrt(a_from);
    for (size_t i = 0; i < zt.size(); ++i) {
      const double x0_scaled = (static_cast<double>(zt.v[i]) - s_from * eps.v[i]) * r;
      zt.v[i] = static_cast<float>(x0_scaled + s_to * eps.v[i]);
    }
  };

  // inversion: clean -> ts[t-1]
  for (int i = 0; i < t; ++i) {
    const double a_from = (i == 0) ? 1.0 : abar[ts[i - 1]];
    const double a_to = abar[ts[i]];
    const Tensor3 eps = denoiser->predict_noise(z, ts[i], prompt);
    ddim_jump(z, eps, a_from, a_to);
  }
  // denoising: ts[t-1] -> clean
  for (int i = t - 1; i >= 0; --i) {
    const double a_from = abar[ts[i]];
    const double a_to = (i == 0) ? 1.0 : abar[ts[i - 1]];
    const Tensor3 eps = denoiser->predict_noise(z, ts[i], prompt);
    ddim_jump(z, eps, a_from, a_to);
  }

  if (scale != 1.0)
    kern::active().scale_add(z.data(), z.size(), static_cast<float>(1.0 / scale), 0.0f);
  Tensor3 out = backend.decode(z);
  kern::quantize_u16_grid(out.data(), out.size());
  ImageTensor rec;
  rec.px = std::move(out);
  rec.source_path = img.source_path;
  rec.content_hash = content_hash_of(rec.px);
  return rec;
}

}  // namespace aerodetect
