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

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aerodetect/detector.hpp"

namespace aerodetect {

struct PatchGrid {
  int patch_size = 128;
  int stride = 64;
  struct Item {
    int row = 0;  // grid coordinates, not pixels
    int col = 0;
    Tensor3 px;
  };
  std::vector<Item> patches;
};

// Overlapping full patches at {0, stride, 2*stride, ...}; the right/bottom
// remainder is dropped. Throws if the image is smaller than the patch.
PatchGrid extract_patches(const Tensor3& px, int patch_size, int stride);

inline int patch_count_1d(int extent, int size, int stride) {
  return (extent - size) / stride + 1;
}

// Byte length of the patch as JPEG quality 50; the complexity proxy.
size_t patch_complexity_bytes(const Tensor3& patch);

struct ComplexityPoint {
  size_t complexity = 0;
  double error = 0.0;
  Label label = Label::kReal;
  std::string dataset;
  std::string path;
  int row = 0, col = 0;
};

struct ComplexityResult {
  std::vector<ComplexityPoint> points;
  // Spearman rank correlation (ties mid-ranked) per class; unset when a
  // class has fewer than 3 points.
  std::optional<double> rho_real;
  std::optional<double> rho_generated;
};

ComplexityResult complexity_scatter(const std::vector<ManifestRecord>& manifest,
                                    const std::vector<std::shared_ptr<AEBackend>>& backends,
                                    const DistanceCalculator& calc, const MetricSpec& spec,
                                    const ReconCache& cache, int patch_size = 128,
                                    int stride = 64, int workers = 1);

double spearman_rho(const std::vector<std::pair<double, double>>& xy);

struct ErrorHeatmap {
  Tensor3 map;  // (1, h, w) raw error raster
  std::string ae_id;
  std::string metric_id;
  float norm_lo = 0.0f;  // display normalization actually used
  float norm_hi = 1.0f;
};

// Spatially resolved reconstruction error (no spatial averaging). The raw
// raster is authoritative; the 8-bit PNG is a per-image min-max rescale.
ErrorHeatmap localization_heatmap(const AEBackend& backend, const DistanceCalculator& calc,
                                  const MetricSpec& spec, const ImageTensor& img,
                                  const ReconCache& cache);

void save_heatmap_png(const ErrorHeatmap& hm, const std::filesystem::path& path);
void save_heatmap_raw(const ErrorHeatmap& hm, const std::filesystem::path& path);

// Noise predictor driving the deterministic inversion/denoising loop.
class LatentDenoiser {
 public:
  virtual ~LatentDenoiser() = default;
  virtual std::string id() const = 0;
  virtual double latent_scale() const { return 1.0; }
  virtual Tensor3 predict_noise(const Tensor3& z, int timestep,
                                const std::string& prompt) const = 0;
};

// Test denoisers: "stub-zero" predicts zero noise (inversion round-trips
// exactly); "stub-mix" is a seeded deterministic predictor.
std::shared_ptr<LatentDenoiser> make_stub_denoiser(const std::string& id);

// Deterministic inversion for t of total_steps steps followed by t
// denoising steps, through the backend's latent space. t = 0 reduces to the
// plain reconstruction bit-for-bit.
ImageTensor deep_reconstruct(const AEBackend& backend, const LatentDenoiser* denoiser,
                             const ImageTensor& img, int t, int total_steps = 50,
                             const std::string& prompt = "");

// Diffusion schedule constants (scaled-linear betas over 1000 steps).
std::vector<double> ddim_alpha_bars();
std::vector<int> ddim_timesteps(int total_steps);

}  // namespace aerodetect
