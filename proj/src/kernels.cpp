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

#include <cstdlib>
#include <cstring>

#include "aerodetect/kernels.hpp"

namespace aerodetect::kern {

const Impl* avx2_impl_x86();  // defined in kernels_avx2.cpp

const Impl* avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return avx2_impl_x86();
#endif
  return nullptr;
}

const Impl& active() {
  static const Impl* chosen = [] {
    const char* env = std::getenv("AERODETECT_KERNELS");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar();
    const Impl* v = avx2();
    return v ? v : &scalar();
  }();
  return *chosen;
}

}  // namespace aerodetect::kern
