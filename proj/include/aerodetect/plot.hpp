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
#include <string>
#include <vector>

#include "aerodetect/evaluation.hpp"

namespace aerodetect {

// Static PNG charts; no plotting dependency, just rectangles and a tiny
// bitmap font. Good enough for score histograms, AP bars and 2-D density.
void plot_histogram_png(const Histogram& h, const std::string& title,
                        const std::filesystem::path& path);

void plot_bars_png(const std::map<std::string, double>& values, const std::string& title,
                   const std::filesystem::path& path);

// 2-D density of (x, y) points; counts clipped at clip_count per cell.
void plot_density_png(const std::vector<std::pair<double, double>>& xy, int clip_count,
                      const std::string& title, const std::filesystem::path& path);

}  // namespace aerodetect
