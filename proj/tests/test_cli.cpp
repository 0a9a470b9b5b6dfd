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

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "aerodetect/backends.hpp"
#include "aerodetect/common.hpp"
#include "aerodetect/image.hpp"
#include "aerodetect/manifest.hpp"
#include "testutil.hpp"

using namespace aerodetect;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string(AERODETECT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

const fs::path& cli_dir() {
  static const fs::path dir = [] {
    const fs::path d = testutil::scratch_dir() / "cli";
    fs::create_directories(d);
    // 4-image fixture manifest: 2 real textures, 2 stub-blur outputs
    std::vector<ManifestRecord> manifest;
    BackendRegistry reg = BackendRegistry::with_builtins(d / "nw");
    auto blur = reg.get("stub-blur");
    for (int i = 0; i < 2; ++i) {
      const ImageTensor real = testutil::texture_image(128, 128, 900 + i);
      const fs::path rp = d / ("r" + std::to_string(i) + ".png");
      save_png8(real.px, rp);
      manifest.push_back({rp.string(), Label::kReal, "real", std::nullopt});
      const ImageTensor gen = blur->reconstruct(real);
      const fs::path gp = d / ("g" + std::to_string(i) + ".png");
      save_png8(gen.px, gp);
      manifest.push_back({gp.string(), Label::kGenerated, "stubgen", std::nullopt});
    }
    save_manifest(manifest, d / "manifest.jsonl");
    return d;
  }();
  return dir;
}

size_t count_lines(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  size_t n = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("cli: detect writes one score line per image and backend") {
  const fs::path d = cli_dir();
  const auto r = run_cli("detect --manifest " + (d / "manifest.jsonl").string() +
                         " --aes stub-identity --metric mse --out " + (d / "s1.jsonl").string());
  CHECK(r.exit_code == 0);
  CHECK(count_lines(d / "s1.jsonl") == 4);

  const auto r2 =
      run_cli("detect --manifest " + (d / "manifest.jsonl").string() +
              " --aes stub-identity,stub-blur --metric mse --out " + (d / "s2.jsonl").string());
  CHECK(r2.exit_code == 0);
  CHECK(count_lines(d / "s2.jsonl") == 8);
}

TEST_CASE("cli: detect with a threshold prints decisions") {
  const fs::path d = cli_dir();
  const auto r = run_cli("detect --manifest " + (d / "manifest.jsonl").string() +
                         " --aes stub-blur --metric mse --threshold 0.0001 --out " +
                         (d / "s3.jsonl").string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("decided generated:") != std::string::npos);
}

TEST_CASE("cli: evaluate produces a report with ap per dataset") {
  const fs::path d = cli_dir();
  run_cli("detect --manifest " + (d / "manifest.jsonl").string() +
          " --aes stub-blur --metric mse --out " + (d / "s4.jsonl").string());
  const auto r = run_cli("evaluate --scores " + (d / "s4.jsonl").string() + " --fpr 0.05 --out " +
                         (d / "rep.json").string() + " --plot-dir " + (d / "plots").string());
  CHECK(r.exit_code == 0);
  const json rep = json::parse(read_file(d / "rep.json"));
  CHECK(rep.at("per_dataset").contains("stubgen"));
  CHECK(rep.at("per_dataset").at("stubgen").contains("ap"));
  CHECK(rep.at("fpr_level") == 0.05);
  CHECK(fs::exists(d / "plots" / "ap.png"));
  CHECK(fs::exists(d / "plots" / "hist-stubgen.png"));
}

TEST_CASE("cli: attribute writes fractions per dataset") {
  const fs::path d = cli_dir();
  run_cli("detect --manifest " + (d / "manifest.jsonl").string() +
          " --aes stub-identity,stub-blur --metric mse --out " + (d / "s5.jsonl").string());
  const auto r = run_cli("attribute --scores " + (d / "s5.jsonl").string() + " --out " +
                         (d / "attr.json").string());
  CHECK(r.exit_code == 0);
  const json attr = json::parse(read_file(d / "attr.json"));
  CHECK(attr.at("per_dataset").contains("stubgen"));
  double sum = 0.0;
  for (const auto& [_, v] : attr.at("per_dataset").at("stubgen").items())
    sum += v.get<double>();
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cli: metrics list and version") {
  const auto r = run_cli("metrics list");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("lpips-vgg16-l2") != std::string::npos);
  CHECK(r.output.find("ms-ssim") != std::string::npos);

  const auto v = run_cli("--version");
  CHECK(v.exit_code == 0);
  CHECK(v.output.find("aerodetect") != std::string::npos);
}

TEST_CASE("cli: usage errors exit 1") {
  CHECK(run_cli("frobnicate").exit_code == 1);
  CHECK(run_cli("").exit_code == 1);
  CHECK(run_cli("detect --manifest missing.jsonl --aes stub-blur --out x.jsonl").exit_code != 0);
  // unknown metric is a usage error
  const fs::path d = cli_dir();
  CHECK(run_cli("detect --manifest " + (d / "manifest.jsonl").string() +
                " --aes stub-blur --metric nope --out " + (d / "x.jsonl").string())
            .exit_code == 1);
}

TEST_CASE("cli: perturb and reconstruct round trip files") {
  const fs::path d = cli_dir();
  const auto r = run_cli("perturb --kind jpeg --strength 80 --in " + (d / "r0.png").string() +
                         " --out " + (d / "r0-j80.png").string());
  CHECK(r.exit_code == 0);
  const ImageTensor img = load_image(d / "r0-j80.png");
  CHECK(img.height() == 128);

  const auto rec = run_cli("reconstruct --ae stub-blur --in " + (d / "r0.png").string() +
                           " --out " + (d / "r0-rec.png").string() + " --cache " +
                           (d / "cache").string());
  CHECK(rec.exit_code == 0);
  CHECK(fs::exists(d / "r0-rec.png"));
}

TEST_CASE("cli: localize emits display and raw maps") {
  const fs::path d = cli_dir();
  const auto r = run_cli("localize --ae stub-blur --metric mse --in " + (d / "r0.png").string() +
                         " --out-map " + (d / "map.png").string() + " --out-raw " +
                         (d / "map.raw.json").string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(d / "map.png"));
  const json raw = json::parse(read_file(d / "map.raw.json"));
  CHECK(raw.at("metric_id") == "mse");
  CHECK(raw.at("ae_id") == "stub-blur");
}

TEST_CASE("cli: deep reduces to reconstruct at t=0") {
  const fs::path d = cli_dir();
  const auto r = run_cli("deep --ae stub-blur --t 0 --in " + (d / "r0.png").string() + " --out " +
                         (d / "deep0.png").string());
  CHECK(r.exit_code == 0);
  const auto rec = run_cli("reconstruct --ae stub-blur --in " + (d / "r0.png").string() +
                           " --out " + (d / "rec0.png").string());
  CHECK(rec.exit_code == 0);
  CHECK(read_file(d / "deep0.png") == read_file(d / "rec0.png"));

  // unknown denoiser id is a usage error
  const auto fail = run_cli("deep --ae stub-blur --denoiser stub-nope --t 1 --in " +
                            (d / "r0.png").string() + " --out " + (d / "deepx.png").string());
  CHECK(fail.exit_code == 1);
  CHECK(fail.output.find("denoiser") != std::string::npos);

  // weight-backed backends without exported weights name their source
  const auto noweights = run_cli("deep --ae sd1 --t 1 --in " + (d / "r0.png").string() +
                                 " --out " + (d / "deepy.png").string());
  CHECK(noweights.exit_code == 2);
  CHECK(noweights.output.find("weights unavailable") != std::string::npos);
}

TEST_CASE("cli: sweep over a small grid") {
  const fs::path d = cli_dir();
  {
    std::ofstream f(d / "grid.json", std::ios::trunc);
    f << R"([{"kind":"noise","strength":0.05},{"kind":"noise","strength":0.25}])";
  }
  const auto r = run_cli("sweep --manifest " + (d / "manifest.jsonl").string() +
                         " --grid " + (d / "grid.json").string() +
                         " --aes stub-blur --metric mse --fpr 0.05 --out " +
                         (d / "sweep.json").string());
  CHECK(r.exit_code == 0);
  const json sw = json::parse(read_file(d / "sweep.json"));
  CHECK(sw.at("rows").size() == 2);
  for (const auto& row : sw.at("rows")) {
    CHECK(row.contains("ap_mean"));
    CHECK(row.at("per_dataset").contains("stubgen"));
  }
}

TEST_CASE("cli: complexity emits points and correlations") {
  const fs::path d = cli_dir();
  const auto r = run_cli("complexity --manifest " + (d / "manifest.jsonl").string() +
                         " --aes stub-blur --metric mse --patch-size 64 --stride 64 --out " +
                         (d / "points.jsonl").string() + " --plot " + (d / "cx.png").string());
  CHECK(r.exit_code == 0);
  CHECK(count_lines(d / "points.jsonl") == 4 * 4);  // 128/64 -> 2x2 patches per image
  CHECK(fs::exists(d / "cx.png"));
}

TEST_CASE("cli: reruns with a warm cache are byte-identical") {
  const fs::path d = cli_dir();
  const std::string detect = "detect --manifest " + (d / "manifest.jsonl").string() +
                             " --aes stub-blur --metric mse --cache " + (d / "cache2").string() +
                             " --out ";
  CHECK(run_cli(detect + (d / "i1.jsonl").string()).exit_code == 0);
  CHECK(run_cli(detect + (d / "i2.jsonl").string()).exit_code == 0);
  CHECK(read_file(d / "i1.jsonl") == read_file(d / "i2.jsonl"));
}
