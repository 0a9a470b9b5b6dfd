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

#include "aerodetect/perturb.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "aerodetect/common.hpp"
#include "aerodetect/kernels.hpp"
#include "aerodetect/rng.hpp"

namespace aerodetect {

using nlohmann::json;

std::string perturbation_kind_name(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::kJpeg: return "jpeg";
    case PerturbationKind::kCrop: return "crop";
    case PerturbationKind::kBlur: return "blur";
    default: return "noise";
  }
}

PerturbationKind perturbation_kind_from_name(const std::string& s) {
  if (s == "jpeg") return PerturbationKind::kJpeg;
  if (s == "crop") return PerturbationKind::kCrop;
  if (s == "blur") return PerturbationKind::kBlur;
  if (s == "noise") return PerturbationKind::kNoise;
  throw UsageError("unknown perturbation kind '" + s + "' (known: jpeg, crop, blur, noise)");
}

bool PerturbationSpec::is_identity() const {
  switch (kind) {
    case PerturbationKind::kCrop: return strength == 1.0;
    case PerturbationKind::kBlur:
    case PerturbationKind::kNoise: return strength == 0.0;
    default: return false;  // jpeg is always lossy
  }
}

void PerturbationSpec::validate() const {
  switch (kind) {
    case PerturbationKind::kJpeg:
      if (strength < 50 || strength > 100 || strength != std::floor(strength))
        throw UsageError("jpeg quality must be an integer in [50,100]");
      break;
    case PerturbationKind::kCrop:
      if (!(strength > 0.0 && strength <= 1.0))
        throw UsageError("crop factor must be in (0,1]");
      break;
    default:
      if (!(strength >= 0.0)) throw UsageError("sigma must be nonnegative");
  }
}

namespace {

ImageTensor rewrap(Tensor3 px, const ImageTensor& src) {
  ImageTensor out;
  out.px = std::move(px);
  for (float& v : out.px.v) v = std::clamp(v, 0.0f, 1.0f);
  out.source_path = src.source_path;
  out.content_hash = content_hash_of(out.px);
  return out;
}

Tensor3 gaussian_blur9(const Tensor3& px, double sigma) {
  constexpr int kRadius = 4;  // kernel size 9
  std::vector<float> taps(2 * kRadius + 1);
  double sum = 0.0;
  for (int t = -kRadius; t <= kRadius; ++t) {
    const double v = std::exp(-0.5 * t * t / (sigma * sigma));
    taps[t + kRadius] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : taps) v = static_cast<float>(v / sum);
  Tensor3 out(px.c, px.h, px.w);
  std::vector<float> tmp(px.plane_size());
  for (int c = 0; c < px.c; ++c) {
    kern::active().sep_conv_h(px.plane(c), tmp.data(), px.h, px.w, taps.data(), kRadius);
    kern::active().sep_conv_v(tmp.data(), out.plane(c), px.h, px.w, taps.data(), kRadius);
  }
  return out;
}

}  // namespace

ImageTensor perturb(const PerturbationSpec& spec, const ImageTensor& img) {
  spec.validate();
  if (spec.is_identity()) return img;

  switch (spec.kind) {
    case PerturbationKind::kJpeg: {
      const auto bytes = encode_jpeg(img.px, static_cast<int>(spec.strength));
      ImageTensor out = decode_image(bytes, img.source_path);
      out.source_path = img.source_path;
      return out;
    }
    case PerturbationKind::kCrop: {
      const int ch = static_cast<int>(std::lround(spec.strength * img.px.h));
      const int cw = static_cast<int>(std::lround(spec.strength * img.px.w));
      if (std::min(ch, cw) < 128)
        throw UsageError("crop factor " + std::to_string(spec.strength) +
                         " leaves less than 128 pixels on the short side");
      Tensor3 cropped = center_crop(img.px, ch, cw);
      Tensor3 restored(3, img.px.h, img.px.w);
      for (int c = 0; c < 3; ++c)
        kern::resize_bicubic(cropped.plane(c), ch, cw, restored.plane(c), img.px.h, img.px.w);
      return rewrap(std::move(restored), img);
    }
    case PerturbationKind::kBlur:
      return rewrap(gaussian_blur9(img.px, spec.strength), img);
    case PerturbationKind::kNoise: {
      Rng rng(seed_from(img.content_hash, spec.seed));
      Tensor3 out = img.px;
      for (float& v : out.v)
        v = static_cast<float>(v + spec.strength * rng.normal());
      return rewrap(std::move(out), img);
    }
  }
  throw UsageError("unreachable perturbation kind");
}

std::vector<PerturbationSpec> default_perturbation_grid() {
  std::vector<PerturbationSpec> grid;
  for (int q : {90, 80, 70, 60, 50})
    grid.push_back({PerturbationKind::kJpeg, static_cast<double>(q), 0});
  for (double f : {0.9, 0.8, 0.7, 0.6, 0.5})
    grid.push_back({PerturbationKind::kCrop, f, 0});
  for (double s : {1.0, 2.0, 3.0, 4.0, 5.0})
    grid.push_back({PerturbationKind::kBlur, s, 0});
  for (double s : {0.05, 0.10, 0.15, 0.20, 0.25})
    grid.push_back({PerturbationKind::kNoise, s, 0});
  return grid;
}

std::vector<PerturbationSpec> load_perturbation_grid(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError("malformed grid file " + path.string() + ": " + e.what());
  }
  std::vector<PerturbationSpec> grid;
  for (const auto& e : j) {
    PerturbationSpec s;
    s.kind = perturbation_kind_from_name(e.at("kind").get<std::string>());
    s.strength = e.at("strength").get<double>();
    s.seed = e.value("seed", 0);
    s.validate();
    grid.push_back(s);
  }
  if (grid.empty()) throw UsageError("perturbation grid is empty: " + path.string());
  return grid;
}

json SweepReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json per_ds = json::object();
    for (const auto& [name, ev] : r.per_dataset)
      per_ds[name] = {{"ap", ev.ap},
                      {"tpr_at_fpr", ev.tpr_at_fpr},
                      {"n_real", ev.n_real},
                      {"n_generated", ev.n_generated}};
    rows_j.push_back({{"kind", perturbation_kind_name(r.spec.kind)},
                      {"strength", r.spec.strength},
                      {"seed", r.spec.seed},
                      {"per_dataset", per_ds},
                      {"ap_min", r.ap_min},
                      {"ap_mean", r.ap_mean},
                      {"ap_max", r.ap_max},
                      {"tpr_min", r.tpr_min},
                      {"tpr_mean", r.tpr_mean},
                      {"tpr_max", r.tpr_max}});
  }
  return json{{"metric_id", metric_id},
              {"ae_pool", ae_pool},
              {"fpr_level", fpr_level},
              {"rows", rows_j}};
}

SweepReport robustness_sweep(const std::vector<ManifestRecord>& manifest,
                             const std::vector<std::shared_ptr<AEBackend>>& backends,
                             const DistanceCalculator& calc, const MetricSpec& spec,
                             const std::vector<PerturbationSpec>& grid, double fpr_level,
                             const ReconCache& cache, int workers) {
  if (grid.empty()) throw UsageError("perturbation grid is empty");
  if (manifest.empty()) throw UsageError("manifest is empty");

  struct Loaded {
    ManifestRecord rec;
    ImageTensor img;
  };
  std::vector<Loaded> images;
  for (const auto& rec : manifest) {
    try {
      images.push_back({rec, prepare_for_ae(load_image(rec.path))});
    } catch (const std::exception& e) {
      AD_WARN("skipping %s: %s", rec.path.c_str(), e.what());
    }
  }
  if (images.empty()) throw UsageError("no loadable images in manifest");

  SweepReport rep;
  rep.metric_id = spec.metric_id;
  for (const auto& b : backends) rep.ae_pool.push_back(b->ae_id());
  rep.fpr_level = fpr_level;

  for (const auto& pspec : grid) {
    std::vector<LabeledScore> scored(images.size());
    std::vector<char> ok(images.size(), 0);
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= images.size()) return;
        try {
          const ImageTensor pert = perturb(pspec, images[i].img);
          const DetectionScore ds = delta_min(backends, calc, spec, pert, cache);
          scored[i] = {ds.min_value, images[i].rec.label, images[i].rec.dataset};
          ok[i] = 1;
        } catch (const std::exception& e) {
          AD_WARN("sweep: skipping %s under %s=%g: %s", images[i].rec.path.c_str(),
                  perturbation_kind_name(pspec.kind).c_str(), pspec.strength, e.what());
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

    std::vector<LabeledScore> kept;
    for (size_t i = 0; i < images.size(); ++i)
      if (ok[i]) kept.push_back(scored[i]);

    EvalReport ev = build_report(kept, fpr_level, 1);
    SweepRow row;
    row.spec = pspec;
    row.per_dataset = ev.per_dataset;
    double ap_sum = 0.0, tpr_sum = 0.0;
    row.ap_min = row.tpr_min = 1.0;
    row.ap_max = row.tpr_max = 0.0;
    for (const auto& [_, d] : ev.per_dataset) {
      ap_sum += d.ap;
      tpr_sum += d.tpr_at_fpr;
      row.ap_min = std::min(row.ap_min, d.ap);
      row.ap_max = std::max(row.ap_max, d.ap);
      row.tpr_min = std::min(row.tpr_min, d.tpr_at_fpr);
      row.tpr_max = std::max(row.tpr_max, d.tpr_at_fpr);
    }
    const double n = static_cast<double>(ev.per_dataset.size());
    row.ap_mean = ap_sum / n;
    row.tpr_mean = tpr_sum / n;
    AD_INFO("sweep %s=%g: ap mean %.4f [%.4f, %.4f]",
            perturbation_kind_name(pspec.kind).c_str(), pspec.strength, row.ap_mean, row.ap_min,
            row.ap_max);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace aerodetect
