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
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aerodetect/image.hpp"
#include "aerodetect/tensor.hpp"

namespace aerodetect {

// One autoencoder: encode to latent space and decode back. Reconstructions
// preserve spatial dimensions, land in [0,1] on the 16-bit grid (so cached
// PNG round-trips are bit-exact), and are deterministic.
class AEBackend {
 public:
  AEBackend(std::string ae_id, std::string kind, std::string weights_source, int factor)
      : ae_id_(std::move(ae_id)),
        kind_(std::move(kind)),
        weights_source_(std::move(weights_source)),
        downsample_factor_(factor) {}
  virtual ~AEBackend() = default;

  const std::string& ae_id() const { return ae_id_; }
  const std::string& kind() const { return kind_; }
  const std::string& weights_source() const { return weights_source_; }
  int downsample_factor() const { return downsample_factor_; }

  virtual Tensor3 encode(const Tensor3& img) const = 0;    // [0,1] in, latent out
  virtual Tensor3 decode(const Tensor3& latent) const = 0; // latent in, [0,1] out

  ImageTensor reconstruct(const ImageTensor& img) const;

 protected:
  void check_aligned(const Tensor3& img) const;

 private:
  std::string ae_id_;
  std::string kind_;
  std::string weights_source_;
  int downsample_factor_;
};

struct BackendDescriptor {
  std::string ae_id;
  std::string kind;            // "kl-vae" | "vq-vae" | "stub"
  std::string weights_source;  // bundle path; "identity"/"blur" for stubs
  int downsample_factor = 8;
};

BackendDescriptor load_backend_descriptor(const std::filesystem::path& path);

// Lossless per-(ae, image) reconstruction store:
//   <root>/recon/<ae_id>/<content_hash>.png (16-bit).
// Corrupt entries are recomputed and overwritten with a warning.
class ReconCache {
 public:
  ReconCache() = default;  // disabled
  explicit ReconCache(std::filesystem::path root) : root_(std::move(root)) {}

  bool enabled() const { return !root_.empty(); }
  std::filesystem::path path_for(const std::string& ae_id, const std::string& content_hash) const;
  std::optional<Tensor3> lookup(const std::string& ae_id, const std::string& content_hash,
                                int expect_h, int expect_w) const;
  void store(const std::string& ae_id, const std::string& content_hash, const Tensor3& px) const;

 private:
  std::filesystem::path root_;
};

ImageTensor reconstruct_cached(const AEBackend& backend, const ImageTensor& img,
                               const ReconCache& cache);

// Known backends; read-only after startup. Weight-backed entries resolve
// and load their bundles on first use.
class BackendRegistry {
 public:
  // Registers the two stubs plus the weight-backed entries (sd1, sd15, sd2,
  // kd2.1) whose bundles live under weights_dir.
  static BackendRegistry with_builtins(const std::filesystem::path& weights_dir);

  void register_backend(const BackendDescriptor& d);  // duplicate ae_id -> error
  std::shared_ptr<AEBackend> get(const std::string& ae_id) const;
  std::vector<std::string> ids() const;
  bool has(const std::string& ae_id) const;

 private:
  mutable std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  std::map<std::string, BackendDescriptor> descriptors_;
  mutable std::map<std::string, std::shared_ptr<AEBackend>> instances_;
};

}  // namespace aerodetect
