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
#include <string>

#include "aerodetect/backbones.hpp"
#include "aerodetect/image.hpp"
#include "aerodetect/vae.hpp"
#include "aerodetect/weights.hpp"

namespace testutil {

// Multi-octave value-noise texture with gradients and soft blobs; strong
// pixel-scale detail so blur residuals are never degenerate. Values are
// quantized to the 8-bit grid like any decoded image.
aerodetect::Tensor3 texture(int h, int w, uint64_t seed);
aerodetect::ImageTensor texture_image(int h, int w, uint64_t seed);

// Seeded stand-in weights with the real architectures' shapes. The values
// are uniform draws from a pinned generator, so every platform regenerates
// identical bundles and golden values stay comparable.
aerodetect::WeightBundle make_backbone_bundle(aerodetect::Backbone b, uint64_t seed);
aerodetect::WeightBundle make_vae_bundle(const aerodetect::VaeConfig& cfg, uint64_t seed);

aerodetect::VaeConfig tiny_kl_config();
aerodetect::VaeConfig tiny_vq_config();

// Per-process scratch directory (removed on exit is not attempted; the OS
// temp dir owns it).
const std::filesystem::path& scratch_dir();

// Writes vgg16/alexnet/squeezenet bundles once per process and returns the
// directory, for DistanceCalculator.
const std::filesystem::path& backbone_weights_dir();

// Writes the tiny kl/vq bundles once per process; returns the bundle path.
const std::filesystem::path& tiny_kl_bundle();
const std::filesystem::path& tiny_vq_bundle();

}  // namespace testutil
