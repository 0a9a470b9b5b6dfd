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

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace aerodetect {

// Dense planar float32 raster, channel-major (CHW). The unit of every image
// and feature-map computation in this project.
struct Tensor3 {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, float fill = 0.0f)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  size_t plane_size() const { return static_cast<size_t>(h) * w; }

  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  float* plane(int ch) { return v.data() + static_cast<size_t>(ch) * plane_size(); }
  const float* plane(int ch) const { return v.data() + static_cast<size_t>(ch) * plane_size(); }

  float& at(int ch, int y, int x) {
    assert(ch >= 0 && ch < c && y >= 0 && y < h && x >= 0 && x < w);
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  const float& at(int ch, int y, int x) const {
    assert(ch >= 0 && ch < c && y >= 0 && y < h && x >= 0 && x < w);
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor3& o) const { return c == o.c && h == o.h && w == o.w; }
};

}  // namespace aerodetect
