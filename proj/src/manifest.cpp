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

#include "aerodetect/manifest.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "aerodetect/common.hpp"

namespace aerodetect {

using nlohmann::json;

std::string label_to_string(Label l) { return l == Label::kReal ? "real" : "generated"; }

Label label_from_string(const std::string& s) {
  if (s == "real") return Label::kReal;
  if (s == "generated") return Label::kGenerated;
  throw UsageError("unknown label '" + s + "'");
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw UsageError("malformed manifest line " + std::to_string(lineno) + " in " +
                       path.string() + ": " + e.what());
    }
    ManifestRecord r;
    try {
      r.path = j.at("path").get<std::string>();
      const std::string label = j.at("label").get<std::string>();
      try {
        r.label = label_from_string(label);
      } catch (const UsageError&) {
        throw UsageError("unknown label '" + label + "' at line " + std::to_string(lineno));
      }
      r.dataset = j.at("dataset").get<std::string>();
      if (j.contains("generator_id") && !j.at("generator_id").is_null())
        r.generator_id = j.at("generator_id").get<std::string>();
    } catch (const json::exception& e) {
      throw UsageError("malformed manifest line " + std::to_string(lineno) + " in " +
                       path.string() + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_manifest(const std::vector<ManifestRecord>& records,
                   const std::filesystem::path& path) {
  std::ostringstream ss;
  for (const auto& r : records) {
    json j{{"path", r.path}, {"label", label_to_string(r.label)}, {"dataset", r.dataset}};
    if (r.generator_id) j["generator_id"] = *r.generator_id;
    ss << j.dump() << "\n";
  }
  atomic_write(path, ss.str());
}

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open scores: " + path.string());
  std::vector<ScoreRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw UsageError("malformed score line " + std::to_string(lineno) + " in " + path.string() +
                       ": " + e.what());
    }
    ScoreRecord r;
    try {
      r.content_hash = j.at("content_hash").get<std::string>();
      r.path = j.value("path", std::string{});
      r.ae_id = j.at("ae_id").get<std::string>();
      r.metric_id = j.at("metric_id").get<std::string>();
      r.value = j.at("value").get<double>();
      r.dataset = j.at("dataset").get<std::string>();
      r.label = label_from_string(j.at("label").get<std::string>());
    } catch (const json::exception& e) {
      throw UsageError("malformed score line " + std::to_string(lineno) + " in " + path.string() +
                       ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void persist_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
  std::ostringstream ss;
  for (const auto& r : records) {
    json j{{"content_hash", r.content_hash}, {"path", r.path},       {"ae_id", r.ae_id},
           {"metric_id", r.metric_id},       {"value", r.value},     {"dataset", r.dataset},
           {"label", label_to_string(r.label)}};
    ss << j.dump() << "\n";
  }
  atomic_write(path, ss.str());
}

}  // namespace aerodetect
