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

#include <atomic>
#include <cmath>
#include <fstream>

#include "aerodetect/common.hpp"
#include "aerodetect/detector.hpp"
#include "aerodetect/rng.hpp"
#include "testutil.hpp"

using namespace aerodetect;
namespace fs = std::filesystem;

namespace {

struct Env {
  BackendRegistry registry = BackendRegistry::with_builtins(testutil::scratch_dir() / "nw");
  DistanceCalculator calc{testutil::backbone_weights_dir()};
  ReconCache cache;  // disabled
  MetricSpec mse = parse_metric_id("mse");
};

Env& env() {
  static Env e;
  return e;
}

// Test-only projection backend: posterize to k gray levels. Idempotent, so
// it reconstructs its own outputs perfectly, like a well-matched AE.
class PosterizeBackend final : public AEBackend {
 public:
  explicit PosterizeBackend(int levels)
      : AEBackend("posterize-" + std::to_string(levels), "stub", "posterize", 8),
        levels_(levels) {}
  Tensor3 encode(const Tensor3& img) const override {
    check_aligned(img);
    Tensor3 z = img;
    const float k = static_cast<float>(levels_ - 1);
    for (float& v : z.v) v = std::round(v * k) / k;
    return z;
  }
  Tensor3 decode(const Tensor3& latent) const override { return latent; }

 private:
  int levels_;
};

double brute_blur_mse(const Tensor3& x) {
  double acc = 0.0;
  Tensor3 blurred(x.c, x.h, x.w);
  for (int c = 0; c < x.c; ++c)
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) {
        double s = 0.0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx)
            s += x.at(c, std::clamp(y + dy, 0, x.h - 1), std::clamp(xx + dx, 0, x.w - 1));
        blurred.at(c, y, xx) = static_cast<float>(s / 25.0);
      }
  // the backend quantizes its output to the 16-bit grid
  for (float& v : blurred.v) v = std::round(std::clamp(v, 0.0f, 1.0f) * 65535.0f) / 65535.0f;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x.v[i]) - blurred.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("delta_ae: identity gives zero, blur matches the oracle") {
  auto& e = env();
  auto ident = e.registry.get("stub-identity");
  auto blur = e.registry.get("stub-blur");

  const ImageTensor img = testutil::texture_image(64, 64, 11);
  CHECK(delta_ae(*ident, e.calc, e.mse, img, e.cache) == 0.0);

  // uniform gray: blur of a constant is the constant (grid-aligned value,
  // as any decoded image would be)
  ImageTensor gray;
  gray.px = Tensor3(3, 64, 64, 128.0f / 255.0f);
  gray.content_hash = content_hash_of(gray.px);
  CHECK(delta_ae(*blur, e.calc, e.mse, gray, e.cache) == 0.0);

  // checkerboard under mse equals the brute-force blur residual
  ImageTensor check;
  check.px = Tensor3(3, 64, 64, 0.0f);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if ((x / 8 + y / 8) % 2 == 0)
        for (int c = 0; c < 3; ++c) check.px.at(c, y, x) = 1.0f;
  check.content_hash = content_hash_of(check.px);
  const double got = delta_ae(*blur, e.calc, e.mse, check, e.cache);
  const double want = brute_blur_mse(check.px);
  CHECK(got == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("delta_min: singleton pool, explicit minima, tie-breaking") {
  auto& e = env();
  const ImageTensor img = testutil::texture_image(64, 64, 12);
  auto blur = e.registry.get("stub-blur");
  const DetectionScore single = delta_min({blur}, e.calc, e.mse, img, e.cache);
  CHECK(single.min_value == delta_ae(*blur, e.calc, e.mse, img, e.cache));
  CHECK(single.argmin_ae == "stub-blur");
  CHECK(single.per_ae.size() == 1);

  const DetectionScore s =
      make_detection_score("h", {{"a", 0.3}, {"b", 0.2}, {"c", 0.5}}, "mse");
  CHECK(s.min_value == 0.2);
  CHECK(s.argmin_ae == "b");

  const DetectionScore tie =
      make_detection_score("h", {{"zeta", 0.2}, {"alpha", 0.2}, {"mid", 0.4}}, "mse");
  CHECK(tie.argmin_ae == "alpha");  // lexicographic tie-break

  CHECK_THROWS_AS(delta_min({}, e.calc, e.mse, img, e.cache), UsageError);
  CHECK_THROWS_AS(make_detection_score("h", {}, "mse"), UsageError);
}

TEST_CASE("min dominance, pool monotonicity, argmin scale invariance") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, double> per_ae;
    const int n = rng.uniform_int(1, 6);
    for (int i = 0; i < n; ++i)
      per_ae["ae" + std::to_string(i)] = rng.uniform(0.0, 2.0);
    const DetectionScore s = make_detection_score("h", per_ae, "mse");
    for (const auto& [ae, v] : s.per_ae) CHECK(s.min_value <= v);

    // adding a backend never increases the minimum
    auto extended = per_ae;
    extended["extra"] = rng.uniform(0.0, 2.0);
    const DetectionScore s2 = make_detection_score("h", extended, "mse");
    CHECK(s2.min_value <= s.min_value);

    // positive scaling preserves the argmin
    const double scale = rng.uniform(0.1, 10.0);
    std::map<std::string, double> scaled;
    for (const auto& [ae, v] : per_ae) scaled[ae] = v * scale;
    CHECK(make_detection_score("h", scaled, "mse").argmin_ae == s.argmin_ae);
  }
}

TEST_CASE("min dominance holds on real backends") {
  auto& e = env();
  std::vector<std::shared_ptr<AEBackend>> pool = {e.registry.get("stub-identity"),
                                                  e.registry.get("stub-blur")};
  for (int i = 0; i < 5; ++i) {
    const ImageTensor img = testutil::texture_image(64, 64, 20 + i);
    const DetectionScore s = delta_min(pool, e.calc, e.mse, img, e.cache);
    for (const auto& b : pool)
      CHECK(s.min_value <= delta_ae(*b, e.calc, e.mse, img, e.cache));
  }
}

TEST_CASE("matched projection backends win attribution of their own outputs") {
  // With a perfect-reconstruction stub in the pool every image trivially
  // attributes to it, so the mechanism is exercised with two idempotent
  // posterize stubs: each one reconstructs its own outputs exactly and the
  // other one does not.
  auto p4 = std::make_shared<PosterizeBackend>(4);
  auto p7 = std::make_shared<PosterizeBackend>(7);
  auto& e = env();
  std::vector<std::shared_ptr<AEBackend>> pool = {p4, p7};

  int p4_wins = 0, p7_wins = 0;
  for (int i = 0; i < 10; ++i) {
    const ImageTensor x = testutil::texture_image(64, 64, 40 + i);
    const ImageTensor g4 = p4->reconstruct(x);
    const ImageTensor g7 = p7->reconstruct(x);
    const DetectionScore s4 = delta_min(pool, e.calc, e.mse, g4, e.cache);
    const DetectionScore s7 = delta_min(pool, e.calc, e.mse, g7, e.cache);
    CHECK(s4.per_ae.at("posterize-4") == 0.0);
    p4_wins += s4.argmin_ae == "posterize-4";
    p7_wins += s7.argmin_ae == "posterize-7";
  }
  CHECK(p4_wins == 10);
  CHECK(p7_wins == 10);

  // the degenerate perfect reconstructor claims everything, including the
  // other stub's outputs
  auto ident = e.registry.get("stub-identity");
  auto blur = e.registry.get("stub-blur");
  const ImageTensor x = testutil::texture_image(64, 64, 39);
  const ImageTensor g = blur->reconstruct(x);
  const DetectionScore s = delta_min({ident, blur}, e.calc, e.mse, g, e.cache);
  CHECK(s.per_ae.at("stub-identity") == 0.0);
  CHECK(s.per_ae.at("stub-blur") > 0.0);
  CHECK(s.argmin_ae == "stub-identity");
}

TEST_CASE("decide uses an inclusive threshold") {
  const DetectionScore low = make_detection_score("h", {{"a", 0.0}}, "mse");
  CHECK(decide(low, 0.05).is_generated);
  const DetectionScore high = make_detection_score("h", {{"a", 0.06}}, "mse");
  CHECK(!decide(high, 0.05).is_generated);
  const DetectionScore exact = make_detection_score("h", {{"a", 0.05}}, "mse");
  CHECK(decide(exact, 0.05).is_generated);  // boundary inclusive
  CHECK_THROWS_AS(decide(exact, NAN), UsageError);
}

TEST_CASE("attribute: fractions over argmins") {
  auto mk = [](const std::string& argmin) {
    return make_detection_score("h", {{argmin, 0.1}, {"zz-other", 0.2}}, "mse");
  };
  const auto all_sd1 = attribute({mk("sd1"), mk("sd1"), mk("sd1")}, "ds");
  CHECK(all_sd1.at("sd1") == 1.0);
  CHECK(all_sd1.size() == 1);

  const auto mixed = attribute({mk("a"), mk("a"), mk("b")}, "ds");
  CHECK(mixed.at("a") == doctest::Approx(2.0 / 3.0));
  CHECK(mixed.at("b") == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_WITH_AS(attribute({}, "ds"), doctest::Contains("empty"), UsageError);

  // fractions sum to one
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<DetectionScore> scores;
    const int n = rng.uniform_int(1, 40);
    for (int i = 0; i < n; ++i)
      scores.push_back(mk("ae" + std::to_string(rng.uniform_int(0, 4))));
    double sum = 0.0;
    for (const auto& [_, f] : attribute(scores, "ds")) sum += f;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }

  // mixed metrics are rejected
  auto other = make_detection_score("h", {{"a", 0.1}}, "ssim");
  CHECK_THROWS_AS(attribute({mk("a"), other}, "ds"), UsageError);
}

TEST_CASE("score_manifest: counting, caching, failure handling") {
  auto& e = env();
  const fs::path dir = testutil::scratch_dir() / "manifest-run";
  fs::create_directories(dir);

  std::vector<ManifestRecord> manifest;
  for (int i = 0; i < 4; ++i) {
    const fs::path p = dir / ("img" + std::to_string(i) + ".png");
    save_png8(testutil::texture(128, 128, 200 + i), p);
    manifest.push_back({p.string(), i < 2 ? Label::kReal : Label::kGenerated,
                        i < 2 ? "real" : "gen", std::nullopt});
  }

  std::vector<std::shared_ptr<AEBackend>> pool = {e.registry.get("stub-identity"),
                                                  e.registry.get("stub-blur")};
  const ScoredManifest res = score_manifest(manifest, pool, e.calc, e.mse, e.cache, 2);
  CHECK(res.records.size() == 8);
  CHECK(res.scores.size() == 4);
  CHECK(res.failures.empty());
  for (const auto& r : res.records) CHECK(r.metric_id == "mse");

  // duplicate paths are deduplicated by content
  auto dup = manifest;
  dup.push_back(manifest.front());
  const ScoredManifest res2 = score_manifest(dup, pool, e.calc, e.mse, e.cache, 1);
  CHECK(res2.scores.size() == 4);

  // a warm cache serves reconstructions without invoking the backend
  struct Counting final : AEBackend {
    std::shared_ptr<AEBackend> inner;
    mutable std::atomic<int> calls{0};
    explicit Counting(std::shared_ptr<AEBackend> b)
        : AEBackend(b->ae_id(), b->kind(), b->weights_source(), b->downsample_factor()),
          inner(std::move(b)) {}
    Tensor3 encode(const Tensor3& img) const override {
      ++calls;
      return inner->encode(img);
    }
    Tensor3 decode(const Tensor3& latent) const override { return inner->decode(latent); }
  };
  auto counting = std::make_shared<Counting>(e.registry.get("stub-blur"));
  ReconCache cache(testutil::scratch_dir() / "cache-manifest");
  std::vector<std::shared_ptr<AEBackend>> cpool = {counting};
  score_manifest(manifest, cpool, e.calc, e.mse, cache, 1);
  CHECK(counting->calls == 4);
  const ScoredManifest warm = score_manifest(manifest, cpool, e.calc, e.mse, cache, 1);
  CHECK(counting->calls == 4);  // zero new reconstructions
  CHECK(warm.scores.size() == 4);

  // one unreadable image among many is skipped with a warning
  auto broken = manifest;
  for (int i = 4; i < 20; ++i) {
    const fs::path p = dir / ("img" + std::to_string(i) + ".png");
    save_png8(testutil::texture(128, 128, 200 + i), p);
    broken.push_back({p.string(), Label::kGenerated, "gen", std::nullopt});
  }
  broken.push_back({(dir / "missing.png").string(), Label::kReal, "real", std::nullopt});
  const ScoredManifest skipped = score_manifest(broken, pool, e.calc, e.mse, e.cache, 1);
  CHECK(skipped.scores.size() == 20);
  CHECK(skipped.failures.size() == 1);

  // too many failures abort
  std::vector<ManifestRecord> mostly_bad;
  mostly_bad.push_back(manifest.front());
  for (int i = 0; i < 3; ++i)
    mostly_bad.push_back({(dir / ("none" + std::to_string(i) + ".png")).string(), Label::kReal,
                          "real", std::nullopt});
  CHECK_THROWS_WITH_AS(score_manifest(mostly_bad, pool, e.calc, e.mse, e.cache, 1),
                       doctest::Contains("10%"), IoError);

  CHECK_THROWS_AS(score_manifest({}, pool, e.calc, e.mse, e.cache, 1), UsageError);
}
