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

#include "aerodetect/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "aerodetect/common.hpp"

namespace aerodetect {

using nlohmann::json;

namespace {

void check_two_classes(const std::vector<LabeledScore>& scores, const char* what) {
  size_t pos = 0, neg = 0;
  for (const auto& s : scores) {
    if (!std::isfinite(s.value)) throw UsageError("non-finite score value");
    (s.label == Label::kGenerated ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0)
    throw UsageError(std::string(what) + " needs both classes (got " + std::to_string(pos) +
                     " generated, " + std::to_string(neg) + " real)");
}

}  // namespace

double average_precision(const std::vector<LabeledScore>& scores) {
  check_two_classes(scores, "average precision");
  std::vector<std::pair<double, bool>> items;  // (error, is_generated)
  items.reserve(scores.size());
  size_t total_pos = 0;
  for (const auto& s : scores) {
    items.emplace_back(s.value, s.label == Label::kGenerated);
    total_pos += s.label == Label::kGenerated;
  }
  // ascending error = descending detection score
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double ap = 0.0;
  double recall_prev = 0.0;
  size_t tp = 0, seen = 0;
  size_t i = 0;
  while (i < items.size()) {
    size_t j = i;
    size_t block_tp = 0;
    while (j < items.size() && items[j].first == items[i].first) {
      block_tp += items[j].second;
      ++j;
    }
    tp += block_tp;
    seen += j - i;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

namespace {

// Largest observed value admitting at most fpr_level false positives; below
// every observation if none qualifies.
double achievable_threshold(const std::vector<LabeledScore>& scores, double fpr_level) {
  std::vector<double> reals;
  std::set<double> candidates;
  for (const auto& s : scores) {
    candidates.insert(s.value);
    if (s.label == Label::kReal) reals.push_back(s.value);
  }
  std::sort(reals.begin(), reals.end());
  const double n_real = static_cast<double>(reals.size());
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (double t : candidates) {
    const auto admitted =
        std::upper_bound(reals.begin(), reals.end(), t) - reals.begin();
    if (static_cast<double>(admitted) / n_real <= fpr_level) {
      best = t;  // std::set iterates ascending; the last qualifier wins
      found = true;
    }
  }
  if (!found) best = std::nextafter(*candidates.begin(), -std::numeric_limits<double>::infinity());
  return best;
}

}  // namespace

double tpr_at_fpr(const std::vector<LabeledScore>& scores, double fpr_level) {
  check_two_classes(scores, "tpr@fpr");
  if (!(fpr_level >= 0.0 && fpr_level < 1.0))
    throw UsageError("fpr level must be in [0,1)");
  const double t = achievable_threshold(scores, fpr_level);
  size_t tp = 0, pos = 0;
  for (const auto& s : scores) {
    if (s.label != Label::kGenerated) continue;
    ++pos;
    tp += s.value <= t;
  }
  return static_cast<double>(tp) / static_cast<double>(pos);
}

double calibrate_threshold(const std::vector<LabeledScore>& scores, double target_fpr) {
  size_t n_real = 0;
  for (const auto& s : scores) n_real += s.label == Label::kReal;
  if (n_real < 20)
    throw UsageError("threshold calibration needs at least 20 real samples, got " +
                     std::to_string(n_real));
  return achievable_threshold(scores, target_fpr);
}

EvalReport build_report(const std::vector<LabeledScore>& scores, double fpr_level, int bins) {
  if (bins < 1) throw UsageError("histogram needs at least 1 bin");
  std::vector<LabeledScore> reals;
  std::map<std::string, std::vector<LabeledScore>> generated;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : scores) {
    if (!std::isfinite(s.value)) throw UsageError("non-finite score value");
    lo = std::min(lo, s.value);
    hi = std::max(hi, s.value);
    if (s.label == Label::kReal)
      reals.push_back(s);
    else
      generated[s.dataset].push_back(s);
  }
  if (reals.empty()) throw UsageError("report needs real-labeled scores as the shared negatives");
  if (generated.empty()) throw UsageError("report needs generated-labeled scores");
  if (hi <= lo) hi = lo + 1.0;

  EvalReport rep;
  rep.fpr_level = fpr_level;

  auto bin_of = [&](double v) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    return std::clamp(b, 0, bins - 1);
  };
  std::vector<int> real_hist(bins, 0);
  for (const auto& s : reals) real_hist[bin_of(s.value)] += 1;

  for (auto& [dataset, gens] : generated) {
    if (gens.empty()) continue;
    std::vector<LabeledScore> pool = reals;
    pool.insert(pool.end(), gens.begin(), gens.end());
    DatasetEval ev;
    ev.fpr_level = fpr_level;
    ev.ap = average_precision(pool);
    ev.tpr_at_fpr = tpr_at_fpr(pool, fpr_level);
    ev.threshold = achievable_threshold(pool, fpr_level);
    ev.n_real = static_cast<int>(reals.size());
    ev.n_generated = static_cast<int>(gens.size());
    rep.per_dataset.emplace(dataset, ev);

    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.real = real_hist;
    h.generated.assign(bins, 0);
    for (const auto& s : gens) h.generated[bin_of(s.value)] += 1;
    rep.histograms.emplace(dataset, std::move(h));
  }
  return rep;
}

json EvalReport::to_json() const {
  json per_ds = json::object();
  for (const auto& [name, ev] : per_dataset)
    per_ds[name] = {{"ap", ev.ap},
                    {"tpr_at_fpr", ev.tpr_at_fpr},
                    {"fpr_level", ev.fpr_level},
                    {"threshold", ev.threshold},
                    {"n_real", ev.n_real},
                    {"n_generated", ev.n_generated}};
  json hists = json::object();
  for (const auto& [name, h] : histograms)
    hists[name] = {{"lo", h.lo}, {"hi", h.hi}, {"real", h.real}, {"generated", h.generated}};
  return json{{"metric_id", metric_id}, {"ae_pool", ae_pool},   {"fpr_level", fpr_level},
              {"per_dataset", per_ds},  {"histograms", hists},  {"metadata", metadata}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport rep;
  rep.metric_id = j.value("metric_id", std::string{});
  rep.ae_pool = j.value("ae_pool", std::vector<std::string>{});
  rep.fpr_level = j.at("fpr_level").get<double>();
  for (const auto& [name, ev] : j.at("per_dataset").items()) {
    DatasetEval e;
    e.ap = ev.at("ap").get<double>();
    e.tpr_at_fpr = ev.at("tpr_at_fpr").get<double>();
    e.fpr_level = ev.at("fpr_level").get<double>();
    e.threshold = ev.at("threshold").get<double>();
    e.n_real = ev.at("n_real").get<int>();
    e.n_generated = ev.at("n_generated").get<int>();
    rep.per_dataset.emplace(name, e);
  }
  for (const auto& [name, hv] : j.at("histograms").items()) {
    Histogram h;
    h.lo = hv.at("lo").get<double>();
    h.hi = hv.at("hi").get<double>();
    h.real = hv.at("real").get<std::vector<int>>();
    h.generated = hv.at("generated").get<std::vector<int>>();
    rep.histograms.emplace(name, std::move(h));
  }
  rep.metadata = j.value("metadata", json::object());
  return rep;
}

}  // namespace aerodetect
