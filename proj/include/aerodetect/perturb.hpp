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

#include <cstdint>
#include <string>
#include <vector>

#include "aerodetect/detector.hpp"
#include "aerodetect/evaluation.hpp"
#include "aerodetect/image.hpp"

namespace aerodetect {

enum class PerturbationKind { kJpeg, kCrop, kBlur, kNoise };

std::string perturbation_kind_name(PerturbationKind k);
PerturbationKind perturbation_kind_from_name(const std::string& s);

// strength is the JPEG quality q in {50..100}, the crop factor f in (0,1],
// or the Gaussian sigma for blur/noise. Crop f=1, blur sigma=0 and noise
// sigma=0 are exact no-ops.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::kJpeg;
  double strength = 0.0;
  uint64_t seed = 0;  // noise only; folded with the image's content hash

  bool is_identity() const;
  void validate() const;  // throws UsageError on out-of-range strength
};

ImageTensor perturb(const PerturbationSpec& spec, const ImageTensor& img);

// The robustness grid from the evaluation protocol: jpeg q {90..50},
// crop f {0.9..0.5}, blur sigma {1..5}, noise sigma {0.05..0.25}.
std::vector<PerturbationSpec> default_perturbation_grid();

std::vector<PerturbationSpec> load_perturbation_grid(const std::filesystem::path& path);

struct SweepRow {
  PerturbationSpec spec;
  std::map<std::string, DatasetEval> per_dataset;
  double ap_min = 0.0, ap_mean = 0.0, ap_max = 0.0;
  double tpr_min = 0.0, tpr_mean = 0.0, tpr_max = 0.0;
};

struct SweepReport {
  std::string metric_id;
  std::vector<std::string> ae_pool;
  double fpr_level = 0.05;
  std::vector<SweepRow> rows;

  nlohmann::json to_json() const;
};

// Applies each grid entry to every image (both classes), rescoring and
// re-evaluating per dataset against the shared perturbed real pool.
SweepReport robustness_sweep(const std::vector<ManifestRecord>& manifest,
                             const std::vector<std::shared_ptr<AEBackend>>& backends,
                             const DistanceCalculator& calc, const MetricSpec& spec,
                             const std::vector<PerturbationSpec>& grid, double fpr_level,
                             const ReconCache& cache, int workers = 1);

}  // namespace aerodetect
