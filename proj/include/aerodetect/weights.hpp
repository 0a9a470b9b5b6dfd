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
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

namespace aerodetect {

struct NamedTensor {
  std::vector<int> shape;
  std::vector<float> data;

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
  }
};

// Flat container of named float32 tensors plus a free-form JSON config.
// Format: "ABWF" magic, u32 version, u64 header length, JSON header
// (config + tensor index), then raw little-endian f32 payload.
// tools/export_weights.py writes the same layout from torch checkpoints.
class WeightBundle {
 public:
  nlohmann::json config;
  std::map<std::string, NamedTensor> tensors;

  static WeightBundle load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  const NamedTensor& tensor(const std::string& name) const;
};

}  // namespace aerodetect
