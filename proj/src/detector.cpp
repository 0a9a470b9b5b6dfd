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

#include "aerodetect/detector.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "aerodetect/common.hpp"

namespace aerodetect {

DetectionScore make_detection_score(std::string content_hash,
                                    std::map<std::string, double> per_ae, std::string metric_id) {
  if (per_ae.empty()) throw UsageError("detection score needs at least one backend value");
  DetectionScore s;
  s.content_hash = std::move(content_hash);
  s.metric_id = std::move(metric_id);
  s.per_ae = std::move(per_ae);
  s.min_value = s.per_ae.begin()->second;
  s.argmin_ae = s.per_ae.begin()->first;
  for (const auto& [ae, v] : s.per_ae) {
    if (v < s.min_value) {
      s.min_value = v;
      s.argmin_ae = ae;
    }
  }
  return s;
}

double delta_ae(const AEBackend& backend, const DistanceCalculator& calc, const MetricSpec& spec,
                const ImageTensor& img, const ReconCache& cache) {
  const ImageTensor rec = reconstruct_cached(backend, img, cache);
  return calc.distance(spec, img.px, rec.px).value;
}

DetectionScore delta_min(const std::vector<std::shared_ptr<AEBackend>>& backends,
                         const DistanceCalculator& calc, const MetricSpec& spec,
                         const ImageTensor& img, const ReconCache& cache) {
  if (backends.empty()) throw UsageError("backend pool is empty");
  std::map<std::string, double> per_ae;
  for (const auto& b : backends) {
    if (per_ae.count(b->ae_id())) throw UsageError("duplicate backend in pool: " + b->ae_id());
    per_ae[b->ae_id()] = delta_ae(*b, calc, spec, img, cache);
  }
  return make_detection_score(img.content_hash, std::move(per_ae), spec.metric_id);
}

Decision decide(DetectionScore score, double threshold) {
  if (!std::isfinite(threshold)) throw UsageError("threshold must be finite");
  Decision d;
  d.is_generated = score.min_value <= threshold;
  d.threshold = threshold;
  d.score = std::move(score);
  return d;
}

std::map<std::string, double> attribute(const std::vector<DetectionScore>& scores,
                                        const std::string& dataset_tag) {
  if (scores.empty())
    throw UsageError("attribution over empty score set" +
                     (dataset_tag.empty() ? "" : " for dataset '" + dataset_tag + "'"));
  const std::string& metric = scores.front().metric_id;
  std::map<std::string, double> fractions;
  for (const auto& s : scores) {
    if (s.metric_id != metric)
      throw UsageError("attribution requires a single metric, got '" + metric + "' and '" +
                       s.metric_id + "'");
    fractions[s.argmin_ae] += 1.0;
  }
  for (auto& [_, v] : fractions) v /= static_cast<double>(scores.size());
  return fractions;
}

ScoredManifest score_manifest(const std::vector<ManifestRecord>& manifest,
                              const std::vector<std::shared_ptr<AEBackend>>& backends,
                              const DistanceCalculator& calc, const MetricSpec& spec,
                              const ReconCache& cache, int workers) {
  if (manifest.empty()) throw UsageError("manifest is empty");
  if (backends.empty()) throw UsageError("backend pool is empty");

  struct Item {
    ManifestRecord rec;
    ImageTensor img;
    std::map<std::string, double> per_ae;
    std::string error;
    bool loaded = false;
  };

  // Load + prepare sequentially (decode is cheap next to reconstruction),
  // dedup by prepared-content hash.
  std::vector<Item> items;
  std::map<std::string, size_t> seen;
  size_t load_failures = 0;
  for (const auto& rec : manifest) {
    Item it;
    it.rec = rec;
    try {
      it.img = prepare_for_ae(load_image(rec.path));
      if (seen.count(it.img.content_hash)) continue;  // duplicate content
      seen.emplace(it.img.content_hash, items.size());
      it.loaded = true;
    } catch (const std::exception& e) {
      it.error = e.what();
      ++load_failures;
      AD_WARN("skipping %s: %s", rec.path.c_str(), e.what());
    }
    items.push_back(std::move(it));
  }

  // Score unique images; parallel across images, backends sequential within.
  std::vector<size_t> todo;
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i].loaded) todo.push_back(i);

  std::atomic<size_t> next{0};
  std::atomic<size_t> done{0};
  auto worker = [&] {
    for (;;) {
      const size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      Item& it = items[todo[k]];
      try {
        for (const auto& b : backends)
          it.per_ae[b->ae_id()] = delta_ae(*b, calc, spec, it.img, cache);
      } catch (const std::exception& e) {
        it.per_ae.clear();
        it.error = e.what();
        AD_WARN("skipping %s: %s", it.rec.path.c_str(), e.what());
      }
      const size_t d = done.fetch_add(1) + 1;
      if (d % 25 == 0 || d == todo.size())
        AD_INFO("scored %zu/%zu images", d, todo.size());
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

  ScoredManifest out;
  size_t failures = 0;
  for (const Item& it : items) {
    if (!it.loaded || it.per_ae.empty()) {
      ++failures;
      out.failures.push_back(it.rec.path + ": " + it.error);
      continue;
    }
    for (const auto& [ae, v] : it.per_ae) {
      ScoreRecord r;
      r.content_hash = it.img.content_hash;
      r.path = it.rec.path;
      r.ae_id = ae;
      r.metric_id = spec.metric_id;
      r.value = v;
      r.dataset = it.rec.dataset;
      r.label = it.rec.label;
      out.records.push_back(std::move(r));
    }
    out.scores.push_back(make_detection_score(it.img.content_hash, it.per_ae, spec.metric_id));
    out.meta.emplace(it.img.content_hash, it.rec);
  }
  if (!out.failures.empty())
    AD_WARN("%zu image(s) skipped out of %zu", out.failures.size(), items.size());
  if (failures * 10 > items.size())
    throw IoError(std::to_string(failures) + " of " + std::to_string(items.size()) +
                  " images failed (over 10%); aborting");
  return out;
}

}  // namespace aerodetect
