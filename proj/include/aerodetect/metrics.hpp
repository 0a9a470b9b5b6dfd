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

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aerodetect/backbones.hpp"
#include "aerodetect/tensor.hpp"
#include "aerodetect/weights.hpp"

namespace aerodetect {

enum class MetricFamily { kLpips, kDists, kMse, kSsim, kMsSsim };

// Identifier grammar:
//   lpips-<backbone>-all | lpips-<backbone>-l<k> | dists | mse | ssim | ms-ssim
struct MetricSpec {
  std::string metric_id;
  MetricFamily family = MetricFamily::kMse;
  std::optional<Backbone> backbone;
  std::vector<int> layers;  // 1-based stage selection; empty means all stages

  bool wants_all_layers() const { return layers.empty(); }
};

MetricSpec parse_metric_id(const std::string& id);  // throws UsageError, lists known ids
std::vector<std::string> registered_metric_ids();
bool metric_supports_map(const MetricSpec& spec);

struct DistanceResult {
  double value = 0.0;
  std::optional<Tensor3> map;  // (1, h, w); spatial mean reproduces value
  std::string metric_id;
  std::string ae_id;
};

// Computes distances; owns lazily-loaded backbone weight bundles. Metric
// evaluation is pure given the shared read-only weights, so a single
// instance can be used from many threads.
class DistanceCalculator {
 public:
  // weights_dir holds <backbone>.abw bundles (vgg16.abw also carries the
  // structural-texture weights).
  explicit DistanceCalculator(std::filesystem::path weights_dir);

  DistanceResult distance(const MetricSpec& spec, const Tensor3& a, const Tensor3& b,
                          bool want_map = false) const;
  DistanceResult distance(const std::string& metric_id, const Tensor3& a, const Tensor3& b,
                          bool want_map = false) const;

  const WeightBundle& bundle(Backbone b) const;  // throws if the file is absent

 private:
  std::filesystem::path weights_dir_;
  mutable std::mutex mu_;
  mutable std::map<Backbone, std::shared_ptr<WeightBundle>> cache_;
};

// Families that need no learned weights, exposed for tests.
DistanceResult mse_distance(const Tensor3& a, const Tensor3& b, bool want_map);
DistanceResult ssim_distance(const Tensor3& a, const Tensor3& b, bool want_map);
DistanceResult msssim_distance(const Tensor3& a, const Tensor3& b);

}  // namespace aerodetect
