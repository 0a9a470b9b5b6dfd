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

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aerodetect/backends.hpp"
#include "aerodetect/manifest.hpp"
#include "aerodetect/metrics.hpp"

namespace aerodetect {

// Per-image reconstruction errors over a pool of autoencoders, their
// minimum, and the argmin attribution.
struct DetectionScore {
  std::string content_hash;
  std::map<std::string, double> per_ae;
  double min_value = 0.0;
  std::string argmin_ae;
  std::string metric_id;
};

// Derives min_value/argmin_ae; ties break to the lexicographically smallest
// ae_id (std::map order makes that the first minimum encountered).
DetectionScore make_detection_score(std::string content_hash,
                                    std::map<std::string, double> per_ae, std::string metric_id);

struct Decision {
  bool is_generated = false;
  double threshold = 0.0;
  DetectionScore score;
};

// Reconstruction error of one image under one autoencoder.
double delta_ae(const AEBackend& backend, const DistanceCalculator& calc, const MetricSpec& spec,
                const ImageTensor& img, const ReconCache& cache);

// Minimum reconstruction error over a nonempty pool.
DetectionScore delta_min(const std::vector<std::shared_ptr<AEBackend>>& backends,
                         const DistanceCalculator& calc, const MetricSpec& spec,
                         const ImageTensor& img, const ReconCache& cache);

// Threshold rule is inclusive: min_value <= threshold reads as generated.
Decision decide(DetectionScore score, double threshold);

// Fraction of scores whose argmin is each ae_id; sums to 1.
std::map<std::string, double> attribute(const std::vector<DetectionScore>& scores,
                                        const std::string& dataset_tag);

struct ScoredManifest {
  std::vector<ScoreRecord> records;      // one per (unique image, backend)
  std::vector<DetectionScore> scores;    // one per unique content_hash
  std::map<std::string, ManifestRecord> meta;  // content_hash -> manifest entry
  std::vector<std::string> failures;     // per-image skip messages
};

// Batch driver: loads, prepares, dedups by content hash, scores each unique
// image under every backend. Per-image failures are skipped with a warning;
// more than 10% failures abort the run.
ScoredManifest score_manifest(const std::vector<ManifestRecord>& manifest,
                              const std::vector<std::shared_ptr<AEBackend>>& backends,
                              const DistanceCalculator& calc, const MetricSpec& spec,
                              const ReconCache& cache, int workers = 1);

}  // namespace aerodetect
