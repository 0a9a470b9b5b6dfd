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
#include <optional>
#include <string>
#include <vector>

namespace aerodetect {

enum class Label { kReal, kGenerated };

std::string label_to_string(Label l);
Label label_from_string(const std::string& s);  // throws UsageError on unknown

struct ManifestRecord {
  std::string path;
  Label label = Label::kReal;
  std::string dataset;
  std::optional<std::string> generator_id;
};

struct ScoreRecord {
  std::string content_hash;
  std::string path;
  std::string ae_id;
  std::string metric_id;
  double value = 0.0;
  std::string dataset;
  Label label = Label::kReal;
};

// JSONL manifest: one object per line with keys path, label, dataset and
// optional generator_id. Errors name the offending line.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path);

// JSONL scores; floats round-trip bit-exactly.
std::vector<ScoreRecord> load_scores(const std::filesystem::path& path);
void persist_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);

}  // namespace aerodetect
