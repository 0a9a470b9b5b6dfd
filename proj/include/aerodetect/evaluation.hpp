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

#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "aerodetect/manifest.hpp"

namespace aerodetect {

// A reconstruction error with its ground truth. Smaller value means more
// generated-like; generated is the positive class.
struct LabeledScore {
  double value = 0.0;
  Label label = Label::kReal;
  std::string dataset;
};

// Step-wise (non-interpolated) average precision over the ranking by
// ascending error. Tied values enter as one block. Both classes required.
double average_precision(const std::vector<LabeledScore>& scores);

// TPR at the largest achievable threshold whose FPR does not exceed
// fpr_level. Candidate thresholds are the observed values; no interpolation.
double tpr_at_fpr(const std::vector<LabeledScore>& scores, double fpr_level);

// The threshold realized inside tpr_at_fpr, for detector::decide. Requires
// at least 20 real samples.
double calibrate_threshold(const std::vector<LabeledScore>& scores, double target_fpr);

struct DatasetEval {
  double ap = 0.0;
  double tpr_at_fpr = 0.0;
  double fpr_level = 0.0;
  double threshold = 0.0;
  int n_real = 0;
  int n_generated = 0;
};

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<int> real;
  std::vector<int> generated;
};

struct EvalReport {
  std::string metric_id;
  std::vector<std::string> ae_pool;
  double fpr_level = 0.05;
  std::map<std::string, DatasetEval> per_dataset;
  std::map<std::string, Histogram> histograms;
  nlohmann::json metadata;  // pinned conventions, recorded choices

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Per-dataset AP/TPR against the shared real pool (real-labeled scores are
// negatives for every dataset). Datasets are the tags appearing on
// generated scores; a dataset without generated samples is dropped with a
// warning. Histograms are binned over the global score range.
EvalReport build_report(const std::vector<LabeledScore>& scores, double fpr_level, int bins);

}  // namespace aerodetect
