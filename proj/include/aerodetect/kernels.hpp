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

#include <cstddef>
#include <cstdint>

// Low-level raster kernels. Every operation has a scalar reference
// implementation; the hot ones additionally have AVX2+FMA variants selected
// at runtime. The two tables are exposed separately so tests can check the
// variants against each other on random inputs.

namespace aerodetect::kern {

struct Conv2dArgs {
  const float* in = nullptr;  // (ic, ih, iw)
  int ic = 0, ih = 0, iw = 0;
  const float* w = nullptr;  // (oc, ic, kh, kw)
  const float* bias = nullptr;  // (oc) or null
  float* out = nullptr;  // (oc, oh, ow)
  int oc = 0;
  int kh = 0, kw = 0;
  int stride = 1;
  int pt = 0, pl = 0, pb = 0, pr = 0;  // zero padding, per side
};

inline int conv_out_dim(int in, int k, int pad0, int pad1, int stride) {
  return (in + pad0 + pad1 - k) / stride + 1;
}

struct Impl {
  const char* name;

  void (*conv2d)(const Conv2dArgs& a);

  // C(m,n) = A(m,k) * B(k,n); accumulates into C when acc is true.
  void (*sgemm)(const float* A, const float* B, float* C, int m, int k, int n, bool acc);

  void (*relu)(float* p, size_t n);
  void (*silu)(float* p, size_t n);
  // p = p * a + b
  void (*scale_add)(float* p, size_t n, float a, float b);

  double (*sum)(const float* p, size_t n);
  double (*sumsq)(const float* p, size_t n);
  // sum of (a-b)^2
  double (*sqdiff_sum)(const float* a, const float* b, size_t n);

  // out[j] += wc * (a[j]-b[j])^2 for one channel plane
  void (*wsqdiff_accum)(const float* a, const float* b, float wc, float* out, size_t n);

  // acc[j] += p[j]^2 (channel-norm pass 1)
  void (*sq_accum)(const float* p, float* acc, size_t n);
  // p[j] *= scale[j]
  void (*mul_rows)(float* p, const float* scale, size_t n);

  // 1-D correlation with replicated borders, radius r taps of length 2r+1.
  void (*sep_conv_h)(const float* in, float* out, int h, int w, const float* taps, int r);
  void (*sep_conv_v)(const float* in, float* out, int h, int w, const float* taps, int r);
};

const Impl& scalar();
// Null when the CPU lacks AVX2/FMA.
const Impl* avx2();
// avx2 when available unless AERODETECT_KERNELS=scalar is set.
const Impl& active();

// ---- Scalar-only helpers (not dispatched; not on hot paths) ----

void maxpool2d(const float* in, int c, int h, int w, int k, int stride, bool ceil_mode,
               float* out, int oh, int ow);
int pool_out_dim(int in, int k, int stride, bool ceil_mode);

// 2x2 mean pool with stride 2, floor semantics (MS-SSIM downsampling).
void avgpool2x2(const float* in, int c, int h, int w, float* out);

// Half-pixel bilinear resize of one plane.
void resize_bilinear(const float* in, int ih, int iw, float* out, int oh, int ow);
// Catmull-Rom-family bicubic (a = -0.75), replicated borders.
void resize_bicubic(const float* in, int ih, int iw, float* out, int oh, int ow);
// Nearest-neighbor 2x upsample of one plane.
void upsample_nearest2x(const float* in, int h, int w, float* out);

void softmax_rows(float* m, int rows, int cols);

// Min/max over a span.
void min_max(const float* p, size_t n, float* lo, float* hi);

// Snap values to the 16-bit lossless-PNG grid: round(clamp(v,0,1)*65535)/65535.
void quantize_u16_grid(float* p, size_t n);

}  // namespace aerodetect::kern
