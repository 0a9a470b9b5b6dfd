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

#include <fstream>

#include "aerodetect/common.hpp"
#include "aerodetect/manifest.hpp"
#include "testutil.hpp"

using namespace aerodetect;
namespace fs = std::filesystem;

namespace {
fs::path write_text(const std::string& name, const std::string& text) {
  const fs::path p = testutil::scratch_dir() / name;
  std::ofstream f(p, std::ios::trunc);
  f << text;
  return p;
}
}  // namespace

TEST_CASE("manifest: two valid lines parse in order") {
  const auto p = write_text("m2.jsonl",
                            R"({"path":"a.png","label":"real","dataset":"laion"})"
                            "\n"
                            R"({"path":"b.png","label":"generated","dataset":"SD2.1","generator_id":"sd21"})"
                            "\n");
  const auto recs = load_manifest(p);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].path == "a.png");
  CHECK(recs[0].label == Label::kReal);
  CHECK(recs[0].dataset == "laion");
  CHECK(!recs[0].generator_id);
  CHECK(recs[1].label == Label::kGenerated);
  CHECK(recs[1].generator_id == "sd21");
}

TEST_CASE("manifest: empty file is an empty sequence") {
  const auto p = write_text("m0.jsonl", "");
  CHECK(load_manifest(p).empty());
}

TEST_CASE("manifest: unknown label names the value and the line") {
  const auto p = write_text("mbad.jsonl",
                            R"({"path":"a.png","label":"real","dataset":"d"})"
                            "\n"
                            R"({"path":"b.png","label":"fake","dataset":"d"})"
                            "\n");
  CHECK_THROWS_WITH_AS(load_manifest(p), doctest::Contains("unknown label 'fake' at line 2"),
                       UsageError);
}

TEST_CASE("manifest: malformed json names the line") {
  const auto p = write_text("mmal.jsonl", "{\"path\": \"a.png\",\n");
  CHECK_THROWS_WITH_AS(load_manifest(p), doctest::Contains("line 1"), UsageError);
  const auto p2 = write_text("mmis.jsonl", R"({"path":"a.png","label":"real"})"
                                           "\n");
  CHECK_THROWS_AS(load_manifest(p2), UsageError);  // missing dataset
}

TEST_CASE("manifest: save and reload") {
  std::vector<ManifestRecord> recs;
  recs.push_back({"x.png", Label::kReal, "laion", std::nullopt});
  recs.push_back({"y.png", Label::kGenerated, "MJ5", "mj5"});
  const fs::path p = testutil::scratch_dir() / "mrt.jsonl";
  save_manifest(recs, p);
  const auto back = load_manifest(p);
  REQUIRE(back.size() == 2);
  CHECK(back[1].generator_id == "mj5");
}

TEST_CASE("scores: persist/load round-trip is bit-exact") {
  std::vector<ScoreRecord> recs;
  ScoreRecord a{"h1", "a.png", "sd1", "lpips-vgg16-l2", 0.1234567890123456789, "SD2.1",
                Label::kGenerated};
  ScoreRecord b{"h2", "b.png", "stub-blur", "mse", 1.0 / 3.0, "laion", Label::kReal};
  recs = {a, b};
  const fs::path p = testutil::scratch_dir() / "scores.jsonl";
  persist_scores(recs, p);
  const auto back = load_scores(p);
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].content_hash == recs[i].content_hash);
    CHECK(back[i].path == recs[i].path);
    CHECK(back[i].ae_id == recs[i].ae_id);
    CHECK(back[i].metric_id == recs[i].metric_id);
    CHECK(back[i].value == recs[i].value);  // bit-exact doubles
    CHECK(back[i].dataset == recs[i].dataset);
    CHECK(back[i].label == recs[i].label);
  }
}

TEST_CASE("scores: empty sequence round-trips") {
  const fs::path p = testutil::scratch_dir() / "scores0.jsonl";
  persist_scores({}, p);
  CHECK(load_scores(p).empty());
}

TEST_CASE("scores: truncated line names its position") {
  const auto p = write_text("strunc.jsonl",
                            R"({"content_hash":"h","path":"p","ae_id":"a","metric_id":"m","value":0.5,"dataset":"d","label":"real"})"
                            "\n"
                            R"({"content_hash":"h2","path":)"
                            "\n");
  CHECK_THROWS_WITH_AS(load_scores(p), doctest::Contains("line 2"), UsageError);
}
