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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "aerodetect/common.hpp"
#include "aerodetect/evaluation.hpp"
#include "aerodetect/rng.hpp"

using namespace aerodetect;

namespace {

LabeledScore gen(double v, const std::string& ds = "d") { return {v, Label::kGenerated, ds}; }
LabeledScore real(double v, const std::string& ds = "r") { return {v, Label::kReal, ds}; }

// Independent AP oracle: mean over positives of the precision evaluated at
// the end of each positive's tie block (all items with value <= its value).
double ap_oracle(const std::vector<LabeledScore>& scores) {
  size_t total_pos = 0;
  for (const auto& s : scores) total_pos += s.label == Label::kGenerated;
  double sum = 0.0;
  for (const auto& s : scores) {
    if (s.label != Label::kGenerated) continue;
    size_t tp = 0, all = 0;
    for (const auto& t : scores) {
      if (t.value <= s.value) {
        ++all;
        tp += t.label == Label::kGenerated;
      }
    }
    sum += static_cast<double>(tp) / static_cast<double>(all);
  }
  return sum / static_cast<double>(total_pos);
}

// Exhaustive-threshold oracle for tpr@fpr: scan every observed value.
double tpr_oracle(const std::vector<LabeledScore>& scores, double fpr) {
  size_t n_real = 0, n_gen = 0;
  for (const auto& s : scores) (s.label == Label::kReal ? n_real : n_gen) += 1;
  std::set<double> candidates;
  for (const auto& s : scores) candidates.insert(s.value);
  double best_t = -HUGE_VAL;
  bool found = false;
  for (double t : candidates) {
    size_t fp = 0;
    for (const auto& s : scores) fp += s.label == Label::kReal && s.value <= t;
    if (static_cast<double>(fp) / n_real <= fpr && t > best_t) {
      best_t = t;
      found = true;
    }
  }
  size_t tp = 0;
  for (const auto& s : scores)
    if (s.label == Label::kGenerated && found && s.value <= best_t) ++tp;
  return static_cast<double>(tp) / n_gen;
}

std::vector<LabeledScore> random_instance(Rng& rng, int max_n) {
  const int n = rng.uniform_int(2, max_n);
  std::vector<LabeledScore> out;
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    // coarse grid so ties actually happen
    const double v = rng.uniform_int(0, 6) / 4.0;
    const bool is_gen = rng.uniform() < 0.5;
    pos += is_gen;
    out.push_back(is_gen ? gen(v) : real(v));
  }
  if (pos == 0) out[0].label = Label::kGenerated;
  if (pos == static_cast<int>(out.size())) out[0].label = Label::kReal;
  return out;
}

}  // namespace

TEST_CASE("average precision: worked examples") {
  CHECK(average_precision({gen(0.1), gen(0.2), real(0.8), real(0.9)}) == doctest::Approx(1.0));
  CHECK(average_precision({gen(0.1), real(0.2), gen(0.3), real(0.4)}) ==
        doctest::Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0)));
  // total tie: ap equals prevalence
  CHECK(average_precision({gen(0.5), gen(0.5), real(0.5), real(0.5)}) == doctest::Approx(0.5));
  CHECK_THROWS_WITH_AS(average_precision({gen(0.1), gen(0.2)}), doctest::Contains("both classes"),
                       UsageError);
  CHECK_THROWS_AS(average_precision({real(0.1)}), UsageError);
}

TEST_CASE("average precision equals the oracle on 200 random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng, 12);
    CHECK(average_precision(inst) == doctest::Approx(ap_oracle(inst)).epsilon(1e-12));
  }
}

TEST_CASE("average precision is invariant under strictly monotone transforms") {
  Rng rng(2025);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 12);
    const double base = average_precision(inst);
    auto warped = inst;
    for (auto& s : warped) s.value = std::exp(3.0 * s.value) - 0.5;
    CHECK(average_precision(warped) == doctest::Approx(base).epsilon(1e-12));
    auto scaled = inst;
    for (auto& s : scaled) s.value = 0.001 * s.value + 17.0;
    CHECK(average_precision(scaled) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("label swap with negated values maps to the oracle's value") {
  Rng rng(2026);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_instance(rng, 10);
    auto swapped = inst;
    for (auto& s : swapped) {
      s.value = -s.value;
      s.label = s.label == Label::kReal ? Label::kGenerated : Label::kReal;
    }
    CHECK(average_precision(swapped) == doctest::Approx(ap_oracle(swapped)).epsilon(1e-12));
  }
}

TEST_CASE("tpr@fpr: separation cases and the exhaustive oracle") {
  // perfect separation
  std::vector<LabeledScore> sep = {gen(0.1), gen(0.2), real(0.8), real(0.9)};
  CHECK(tpr_at_fpr(sep, 0.05) == doctest::Approx(1.0));
  // inverted: every generated above every real
  std::vector<LabeledScore> inv = {real(0.1), real(0.2), gen(0.8), gen(0.9)};
  CHECK(tpr_at_fpr(inv, 0.05) == doctest::Approx(0.0));

  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LabeledScore> inst;
    for (int i = 0; i < 20; ++i) inst.push_back(real(0.5 + 0.2 * rng.normal()));
    for (int i = 0; i < 20; ++i) inst.push_back(gen(0.3 + 0.2 * rng.normal()));
    const double fpr = rng.uniform(0.0, 0.5);
    CHECK(tpr_at_fpr(inst, fpr) == doctest::Approx(tpr_oracle(inst, fpr)).epsilon(1e-12));
  }
}

TEST_CASE("tpr@fpr is nondecreasing in the fpr level") {
  Rng rng(32);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<LabeledScore> inst;
    for (int i = 0; i < 15; ++i) inst.push_back(real(rng.uniform()));
    for (int i = 0; i < 15; ++i) inst.push_back(gen(rng.uniform(0.0, 0.8)));
    double prev = -1.0;
    for (double f : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
      const double t = tpr_at_fpr(inst, f);
      CHECK(t >= prev);
      prev = t;
    }
  }
}

TEST_CASE("calibrate_threshold realizes the tpr threshold") {
  std::vector<LabeledScore> inst;
  for (int i = 0; i < 20; ++i) inst.push_back(real(0.5 + 0.01 * i));
  for (int i = 0; i < 5; ++i) inst.push_back(gen(0.1 + 0.01 * i));

  // at 5% with n=20, at most one real may be admitted
  const double t = calibrate_threshold(inst, 0.05);
  size_t admitted = 0;
  for (const auto& s : inst) admitted += s.label == Label::kReal && s.value <= t;
  CHECK(admitted <= 1);

  // fpr 0: strictly below the smallest real value
  const double t0 = calibrate_threshold(inst, 0.0);
  CHECK(t0 < 0.5);
  for (const auto& s : inst)
    if (s.label == Label::kReal) CHECK(s.value > t0);

  // too few reals
  std::vector<LabeledScore> few = {real(0.5), gen(0.1)};
  CHECK_THROWS_WITH_AS(calibrate_threshold(few, 0.05), doctest::Contains("20"), UsageError);

  // cross-check against the exhaustive scan
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LabeledScore> rnd;
    for (int i = 0; i < 25; ++i) rnd.push_back(real(0.5 + 0.2 * rng.normal()));
    for (int i = 0; i < 25; ++i) rnd.push_back(gen(0.3 + 0.2 * rng.normal()));
    const double fpr = rng.uniform(0.0, 0.3);
    const double thr = calibrate_threshold(rnd, fpr);
    size_t fp = 0, n_real = 0;
    for (const auto& s : rnd) {
      n_real += s.label == Label::kReal;
      fp += s.label == Label::kReal && s.value <= thr;
    }
    CHECK(static_cast<double>(fp) / n_real <= fpr);
    CHECK(tpr_at_fpr(rnd, fpr) == doctest::Approx(tpr_oracle(rnd, fpr)).epsilon(1e-12));
  }
}

TEST_CASE("build_report: shared negatives, conservation, round-trip") {
  std::vector<LabeledScore> scores;
  Rng rng(34);
  for (int i = 0; i < 10; ++i) scores.push_back(real(0.6 + 0.02 * i, "laion"));
  for (int i = 0; i < 8; ++i) scores.push_back(gen(0.1 + 0.03 * i, "SD2.1"));
  for (int i = 0; i < 6; ++i) scores.push_back(gen(0.2 + 0.03 * i, "MJ5"));

  const EvalReport rep = build_report(scores, 0.05, 40);
  REQUIRE(rep.per_dataset.size() == 2);
  CHECK(rep.per_dataset.at("SD2.1").n_real == 10);
  CHECK(rep.per_dataset.at("MJ5").n_real == 10);  // shared negatives
  CHECK(rep.per_dataset.at("SD2.1").n_generated == 8);
  CHECK(rep.per_dataset.at("MJ5").n_generated == 6);
  for (const auto& [_, ev] : rep.per_dataset) {
    CHECK(ev.ap >= 0.0);
    CHECK(ev.ap <= 1.0);
    CHECK(ev.tpr_at_fpr >= 0.0);
    CHECK(ev.tpr_at_fpr <= 1.0);
  }

  // histogram conservation: real + generated counts = dataset sample count
  for (const auto& [ds, h] : rep.histograms) {
    int total = 0;
    for (int v : h.real) total += v;
    for (int v : h.generated) total += v;
    CHECK(total == rep.per_dataset.at(ds).n_real + rep.per_dataset.at(ds).n_generated);
    CHECK(static_cast<int>(h.real.size()) == 40);
  }

  // serialization round-trips bit-exactly
  EvalReport full = rep;
  full.metric_id = "mse";
  full.ae_pool = {"stub-blur"};
  full.metadata = {{"note", "test"}};
  const std::string once = full.to_json().dump();
  const EvalReport back = EvalReport::from_json(nlohmann::json::parse(once));
  CHECK(back.to_json().dump() == once);

  // single-class inputs and degenerate bins are rejected
  CHECK_THROWS_AS(build_report({real(0.1)}, 0.05, 10), UsageError);
  CHECK_THROWS_AS(build_report(scores, 0.05, 0), UsageError);
}
