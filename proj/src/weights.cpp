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

#include "aerodetect/weights.hpp"

#include <cstring>
#include <fstream>

#include "aerodetect/common.hpp"

namespace aerodetect {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'A', 'B', 'W', 'F'};
constexpr uint32_t kVersion = 1;
}  // namespace

const NamedTensor& WeightBundle::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("weight bundle is missing tensor '" + name + "'");
  return it->second;
}

WeightBundle WeightBundle::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights: " + path.string());
  char magic[4];
  uint32_t version = 0;
  uint64_t hlen = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a weight bundle: " + path.string());
  if (version != kVersion)
    throw IoError("unsupported weight bundle version " + std::to_string(version) + ": " +
                  path.string());
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw IoError("truncated weight bundle header: " + path.string());

  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw IoError("corrupt weight bundle header in " + path.string() + ": " + e.what());
  }

  WeightBundle b;
  b.config = h.value("config", json::object());
  const std::streampos payload = f.tellg();
  for (const auto& t : h.at("tensors")) {
    NamedTensor nt;
    nt.shape = t.at("shape").get<std::vector<int>>();
    const uint64_t offset = t.at("offset").get<uint64_t>();
    const size_t numel = nt.numel();
    nt.data.resize(numel);
    f.seekg(payload + static_cast<std::streamoff>(offset));
    f.read(reinterpret_cast<char*>(nt.data.data()),
           static_cast<std::streamsize>(numel * sizeof(float)));
    if (!f) throw IoError("truncated weight bundle payload: " + path.string());
    b.tensors.emplace(t.at("name").get<std::string>(), std::move(nt));
  }
  return b;
}

void WeightBundle::save(const std::filesystem::path& path) const {
  json index = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    index.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.numel() * sizeof(float);
  }
  const std::string header = json{{"config", config}, {"tensors", index}}.dump();

  std::string out;
  out.reserve(16 + header.size() + offset);
  out.append(kMagic, 4);
  const uint32_t version = kVersion;
  const uint64_t hlen = header.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof(version));
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.append(header);
  for (const auto& [name, t] : tensors)
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  atomic_write(path, out);
}

}  // namespace aerodetect
