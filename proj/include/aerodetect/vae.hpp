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

#include <memory>
#include <string>
#include <vector>

#include "aerodetect/tensor.hpp"
#include "aerodetect/weights.hpp"

namespace aerodetect {

// Convolutional autoencoder graph in the Stable-Diffusion family layout.
// The topology is driven by the weight bundle's config, and tensor names
// follow the reference checkpoints ("encoder.down_blocks.0.resnets.0...."),
// so exported weights map one-to-one.
struct VaeConfig {
  std::string kind;                  // "kl-vae" | "vq-vae"
  int in_channels = 3;
  int base_channels = 128;
  std::vector<int> channel_mult{1, 2, 4, 4};
  int layers_per_block = 2;
  int latent_channels = 4;
  int norm_groups = 32;
  float norm_eps = 1e-6f;
  bool mid_attention = true;
  std::string decoder_norm = "group";  // "group" | "spatial"
  int codebook_size = 0;               // vq only

  int downsample_factor() const { return 1 << (static_cast<int>(channel_mult.size()) - 1); }
  static VaeConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class VaeModel {
 public:
  VaeModel(VaeConfig cfg, std::shared_ptr<const WeightBundle> weights);

  const VaeConfig& config() const { return cfg_; }

  // Input in [-1,1]; KL models return the distribution mode (mean), VQ
  // models return the quantized latent, ties to the lowest codebook index.
  Tensor3 encode(const Tensor3& in) const;
  Tensor3 decode(const Tensor3& latent) const;

 private:
  Tensor3 encoder_forward(const Tensor3& in) const;
  Tensor3 decoder_forward(const Tensor3& sample, const Tensor3* zq) const;
  Tensor3 vq_quantize(const Tensor3& z) const;

  VaeConfig cfg_;
  std::shared_ptr<const WeightBundle> w_;
};

}  // namespace aerodetect
