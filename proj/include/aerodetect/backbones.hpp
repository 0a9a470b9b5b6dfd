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

#include <string>
#include <vector>

#include "aerodetect/tensor.hpp"
#include "aerodetect/weights.hpp"

namespace aerodetect {

// Classifier backbones used as perceptual feature extractors. Layer layout
// and tensor names mirror the torchvision definitions ("features.N.weight"),
// so exported checkpoints map one-to-one.
enum class Backbone { kVgg16, kAlexNet, kSqueezeNet };

std::string backbone_name(Backbone b);
Backbone backbone_from_name(const std::string& s);

int backbone_num_stages(Backbone b);          // feature stages tapped for distances
std::vector<int> backbone_stage_channels(Backbone b);
int backbone_min_input(Backbone b);           // smaller inputs are rejected

// Runs the feature extractor and returns the per-stage post-ReLU activations.
// Input must already be normalized for the backbone. max_stage (1-based)
// stops the forward pass early; <= 0 runs every stage.
std::vector<Tensor3> extract_features(Backbone b, const WeightBundle& w, const Tensor3& in,
                                      int max_stage = 0);

// VGG16 stage features with max-pools replaced by L2 pooling (3x3 Hann
// window, stride 2), as used by the structural-texture distance.
std::vector<Tensor3> extract_features_vgg_l2pool(const WeightBundle& w, const Tensor3& in);

}  // namespace aerodetect
