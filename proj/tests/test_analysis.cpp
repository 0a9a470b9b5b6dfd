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

#include <cmath>

#include "aerodetect/analysis.hpp"
#include "aerodetect/common.hpp"
#include "aerodetect/rng.hpp"
#include "testutil.hpp"

using namespace aerodetect;
namespace fs = std::filesystem;

namespace {

struct Env {
  BackendRegistry registry = BackendRegistry::with_builtins(testutil::scratch_dir() / "nw");
  DistanceCalculator calc{testutil::backbone_weights_dir()};
  ReconCache cache;
  MetricSpec mse = parse_metric_id("mse");
};

Env& env() {
  static Env e;
  return e;
}

}  // namespace

TEST_CASE("patch extraction counts and contents") {
  const Tensor3 big = testutil::texture(512, 512, 1);
  const PatchGrid grid = extract_patches(big, 128, 64);
  CHECK(grid.patches.size() == 49);  // 7x7

  const Tensor3 exact = testutil::texture(128, 128, 2);
  CHECK(extract_patches(exact, 128, 64).patches.size() == 1);

  CHECK(patch_count_1d(1024, 128, 64) * patch_count_1d(1024, 128, 64) == 225);

  // patch contents come from the right offsets
  const auto& p = grid.patches[8];  // row 1, col 1
  CHECK(p.row == 1);
  CHECK(p.col == 1);
  CHECK(p.px.at(0, 0, 0) == big.at(0, 64, 64));
  CHECK(p.px.at(2, 127, 127) == big.at(2, 64 + 127, 64 + 127));

  CHECK_THROWS_WITH_AS(extract_patches(testutil::texture(96, 200, 3), 128, 64),
                       doctest::Contains("smaller"), UsageError);
}

TEST_CASE("patch count formula holds for arbitrary geometry") {
  Rng rng(4);
  for (int i = 0; i < 25; ++i) {
    const int size = rng.uniform_int(16, 64);
    const int stride = rng.uniform_int(8, 48);
    const int h = size + rng.uniform_int(0, 100);
    const int w = size + rng.uniform_int(0, 100);
    const Tensor3 img(3, h, w, 0.25f);
    const PatchGrid g = extract_patches(img, size, stride);
    const size_t want = static_cast<size_t>((h - size) / stride + 1) *
                        static_cast<size_t>((w - size) / stride + 1);
    CHECK(g.patches.size() == want);
    for (const auto& p : g.patches) {
      CHECK(p.px.h == size);
      CHECK(p.px.w == size);
    }
  }
}

TEST_CASE("patch complexity: deterministic, content-driven, position-free") {
  Tensor3 gray(3, 128, 128, 0.5f);
  const size_t plain = patch_complexity_bytes(gray);

  Tensor3 noisy = gray;
  Rng rng(5);
  for (float& v : noisy.v)
    v = std::clamp(v + 0.2f * static_cast<float>(rng.normal()), 0.0f, 1.0f);
  const size_t busy = patch_complexity_bytes(noisy);
  CHECK(plain < busy);

  CHECK(patch_complexity_bytes(noisy) == busy);  // deterministic

  // complexity depends only on pixels, not where the patch came from
  const Tensor3 big = testutil::texture(256, 256, 6);
  const PatchGrid g = extract_patches(big, 128, 64);
  Tensor3 copy = g.patches[2].px;
  CHECK(patch_complexity_bytes(copy) == patch_complexity_bytes(g.patches[2].px));
}

TEST_CASE("spearman rho: hand values and ties") {
  std::vector<std::pair<double, double>> inc = {{1, 2}, {2, 4}, {3, 9}, {4, 16.5}};
  CHECK(spearman_rho(inc) == doctest::Approx(1.0));
  std::vector<std::pair<double, double>> dec = {{1, 5}, {2, 4}, {3, 1}, {4, -2}};
  CHECK(spearman_rho(dec) == doctest::Approx(-1.0));
  std::vector<std::pair<double, double>> tied = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
  CHECK(spearman_rho(tied) == doctest::Approx(0.0));
  CHECK_THROWS_AS(spearman_rho({{1, 1}, {2, 2}}), UsageError);
}

TEST_CASE("complexity scatter separates texture-driven error") {
  auto& e = env();
  const fs::path dir = testutil::scratch_dir() / "cxrun";
  fs::create_directories(dir);
  auto blur = e.registry.get("stub-blur");

  std::vector<ManifestRecord> manifest;
  for (int i = 0; i < 6; ++i) {
    const ImageTensor real = testutil::texture_image(256, 256, 700 + i);
    const fs::path rp = dir / ("real" + std::to_string(i) + ".png");
    save_png8(real.px, rp);
    manifest.push_back({rp.string(), Label::kReal, "real", std::nullopt});

    const ImageTensor gen = blur->reconstruct(real);
    const fs::path gp = dir / ("gen" + std::to_string(i) + ".png");
    save_png8(gen.px, gp);
    manifest.push_back({gp.string(), Label::kGenerated, "stubgen", std::nullopt});
  }

  const ComplexityResult res = complexity_scatter(manifest, {blur}, e.calc, e.mse, e.cache,
                                                  /*patch=*/128, /*stride=*/64, /*workers=*/2);
  CHECK(res.points.size() == 12 * 9);  // 3x3 patches per 256x256 image
  REQUIRE(res.rho_real.has_value());
  REQUIRE(res.rho_generated.has_value());
  CHECK(*res.rho_real > 0.3);
  CHECK(*res.rho_generated < *res.rho_real);
}

TEST_CASE("localization heatmap: zero map for identity, region swap localizes") {
  auto& e = env();
  auto ident = e.registry.get("stub-identity");
  auto blur = e.registry.get("stub-blur");

  const ImageTensor img = testutil::texture_image(128, 128, 800);
  const ErrorHeatmap zero = localization_heatmap(*ident, e.calc, e.mse, img, e.cache);
  for (float v : zero.map.v) CHECK(v == 0.0f);

  // replace a region by its own blur reconstruction; that region should
  // show a clearly lower error under the blur backend
  for (int trial = 0; trial < 2; ++trial) {
    ImageTensor mixed = testutil::texture_image(128, 128, 810 + trial);
    const ImageTensor rec = blur->reconstruct(mixed);
    const int y0 = 32, x0 = 48, sz = 56;
    for (int c = 0; c < 3; ++c)
      for (int y = y0; y < y0 + sz; ++y)
        for (int x = x0; x < x0 + sz; ++x) mixed.px.at(c, y, x) = rec.px.at(c, y, x);
    mixed.content_hash = content_hash_of(mixed.px);

    const ErrorHeatmap hm = localization_heatmap(*blur, e.calc, e.mse, mixed, e.cache);
    double inside = 0.0, outside = 0.0;
    size_t n_in = 0, n_out = 0;
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) {
        // stay away from the seam, the blur kernel straddles it
        const bool in_core = y >= y0 + 4 && y < y0 + sz - 4 && x >= x0 + 4 && x < x0 + sz - 4;
        const bool out_core = y < y0 - 4 || y >= y0 + sz + 4 || x < x0 - 4 || x >= x0 + sz + 4;
        if (in_core) {
          inside += hm.map.at(0, y, x);
          ++n_in;
        } else if (out_core) {
          outside += hm.map.at(0, y, x);
          ++n_out;
        }
      }
    inside /= static_cast<double>(n_in);
    outside /= static_cast<double>(n_out);
    CHECK(inside < 0.5 * outside);
  }

  // metrics without maps are refused
  CHECK_THROWS_WITH_AS(
      localization_heatmap(*blur, e.calc, parse_metric_id("dists"), img, e.cache),
      doctest::Contains("spatial maps"), UsageError);
}

TEST_CASE("heatmap files: display png plus lossless raw") {
  auto& e = env();
  auto blur = e.registry.get("stub-blur");
  const ImageTensor img = testutil::texture_image(64, 64, 820);
  const ErrorHeatmap hm = localization_heatmap(*blur, e.calc, e.mse, img, e.cache);
  const fs::path png = testutil::scratch_dir() / "hm.png";
  const fs::path raw = testutil::scratch_dir() / "hm.raw.json";
  save_heatmap_png(hm, png);
  save_heatmap_raw(hm, raw);
  CHECK(fs::exists(png));
  const auto j = nlohmann::json::parse(read_file(raw));
  CHECK(j.at("height") == 64);
  CHECK(j.at("values").size() == 64 * 64);
  // raw floats round-trip bit-exactly
  const std::vector<float> vals = j.at("values").get<std::vector<float>>();
  CHECK(vals == hm.map.v);
}

TEST_CASE("ddim schedule shape") {
  const auto ts = ddim_timesteps(50);
  REQUIRE(ts.size() == 50);
  CHECK(ts.front() == 1);
  CHECK(ts.back() == 981);
  CHECK(ts[1] - ts[0] == 20);
  const auto abar = ddim_alpha_bars();
  REQUIRE(abar.size() == 1000);
  CHECK(abar[0] > 0.99);
  CHECK(abar[999] < 0.01);
  for (size_t i = 1; i < abar.size(); ++i) CHECK(abar[i] < abar[i - 1]);
  CHECK_THROWS_AS(ddim_timesteps(0), UsageError);
}

TEST_CASE("deep reconstruction: t=0 reduction, zero-noise round trip, errors") {
  auto& e = env();
  auto blur = e.registry.get("stub-blur");
  const ImageTensor img = testutil::texture_image(64, 64, 830);
  const auto zero = make_stub_denoiser("stub-zero");
  const auto mix = make_stub_denoiser("stub-mix");

  // definitional reduction at t=0, bit for bit
  const ImageTensor base = blur->reconstruct(img);
  const ImageTensor t0 = deep_reconstruct(*blur, zero.get(), img, 0);
  CHECK(t0.px.v == base.px.v);

  // with a zero noise prediction, inversion and denoising cancel
  for (int t : {1, 2, 50}) {
    const ImageTensor deep = deep_reconstruct(*blur, zero.get(), img, t);
    float worst = 0.0f;
    for (size_t i = 0; i < deep.px.size(); ++i)
      worst = std::max(worst, std::abs(deep.px.v[i] - base.px.v[i]));
    CHECK(worst <= 2.5f / 65535.0f);
  }

  // the seeded denoiser path is deterministic and prompt-sensitive
  const ImageTensor d1 = deep_reconstruct(*blur, mix.get(), img, 3, 50, "a prompt");
  const ImageTensor d2 = deep_reconstruct(*blur, mix.get(), img, 3, 50, "a prompt");
  CHECK(d1.px.v == d2.px.v);
  const ImageTensor d3 = deep_reconstruct(*blur, mix.get(), img, 3, 50, "another");
  CHECK(d1.px.v != d3.px.v);

  CHECK_THROWS_WITH_AS(deep_reconstruct(*blur, zero.get(), img, 51, 50),
                       doctest::Contains("t must be"), UsageError);
  CHECK_THROWS_WITH_AS(deep_reconstruct(*blur, nullptr, img, 2, 50),
                       doctest::Contains("denoiser"), UsageError);
  CHECK_THROWS_AS(make_stub_denoiser("stub-nope"), UsageError);
}
