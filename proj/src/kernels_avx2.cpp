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

// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma in its own TU;
// selected at runtime only when the CPU reports both.

#include "aerodetect/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace aerodetect::kern {
namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

// ---- GEMM microkernel: C(ROWS x 16) (+)= A(ROWS x K) * B(K x 16) ----
// B rows are ldb apart and must have 16 readable floats; A rows lda apart.
template <int ROWS>
inline void gemm_micro(const float* A, int lda, const float* B, int ldb, float* C, int ldc,
                       int K, bool acc) {
  __m256 c[ROWS][2];
  for (int r = 0; r < ROWS; ++r) {
    if (acc) {
      c[r][0] = _mm256_loadu_ps(C + static_cast<size_t>(r) * ldc);
      c[r][1] = _mm256_loadu_ps(C + static_cast<size_t>(r) * ldc + 8);
    } else {
      c[r][0] = _mm256_setzero_ps();
      c[r][1] = _mm256_setzero_ps();
    }
  }
  for (int k = 0; k < K; ++k) {
    const float* brow = B + static_cast<size_t>(k) * ldb;
    const __m256 b0 = _mm256_loadu_ps(brow);
    const __m256 b1 = _mm256_loadu_ps(brow + 8);
    for (int r = 0; r < ROWS; ++r) {
      const __m256 a = _mm256_set1_ps(A[static_cast<size_t>(r) * lda + k]);
      c[r][0] = _mm256_fmadd_ps(a, b0, c[r][0]);
      c[r][1] = _mm256_fmadd_ps(a, b1, c[r][1]);
    }
  }
  for (int r = 0; r < ROWS; ++r) {
    _mm256_storeu_ps(C + static_cast<size_t>(r) * ldc, c[r][0]);
    _mm256_storeu_ps(C + static_cast<size_t>(r) * ldc + 8, c[r][1]);
  }
}

void gemm_block16(const float* A, int lda, const float* B, int ldb, float* C, int ldc, int m,
                  int K, bool acc) {
  int i = 0;
  for (; i + 6 <= m; i += 6)
    gemm_micro<6>(A + static_cast<size_t>(i) * lda, lda, B, ldb,
                  C + static_cast<size_t>(i) * ldc, ldc, K, acc);
  switch (m - i) {
    case 5: gemm_micro<5>(A + static_cast<size_t>(i) * lda, lda, B, ldb,
                          C + static_cast<size_t>(i) * ldc, ldc, K, acc); break;
    case 4: gemm_micro<4>(A + static_cast<size_t>(i) * lda, lda, B, ldb,
                          C + static_cast<size_t>(i) * ldc, ldc, K, acc); break;
    case 3: gemm_micro<3>(A + static_cast<size_t>(i) * lda, lda, B, ldb,
                          C + static_cast<size_t>(i) * ldc, ldc, K, acc); break;
    case 2: gemm_micro<2>(A + static_cast<size_t>(i) * lda, lda, B, ldb,
                          C + static_cast<size_t>(i) * ldc, ldc, K, acc); break;
    case 1: gemm_micro<1>(A + static_cast<size_t>(i) * lda, lda, B, ldb,
                          C + static_cast<size_t>(i) * ldc, ldc, K, acc); break;
    default: break;
  }
}

void sgemm_avx2(const float* A, const float* B, float* C, int m, int k, int n, bool acc) {
  int j = 0;
  for (; j + 16 <= n; j += 16)
    gemm_block16(A, k, B + j, n, C + j, n, m, k, acc);
  if (j < n) {
    // column tail, scalar
    for (int i = 0; i < m; ++i) {
      float* crow = C + static_cast<size_t>(i) * n;
      const float* arow = A + static_cast<size_t>(i) * k;
      for (int jj = j; jj < n; ++jj) {
        float s = acc ? crow[jj] : 0.0f;
        for (int kk = 0; kk < k; ++kk) s = std::fma(arow[kk], B[static_cast<size_t>(kk) * n + jj], s);
        crow[jj] = s;
      }
    }
  }
}

// ---- conv2d: per-output-row im2col slab + GEMM ----
// Slab layout: K = ic*kh*kw rows of ow_pad columns; row index matches the
// flattened weight layout, so A is the weight matrix as-is.
void conv2d_avx2(const Conv2dArgs& a) {
  const int oh = conv_out_dim(a.ih, a.kh, a.pt, a.pb, a.stride);
  const int ow = conv_out_dim(a.iw, a.kw, a.pl, a.pr, a.stride);
  const size_t in_plane = static_cast<size_t>(a.ih) * a.iw;
  const size_t out_plane = static_cast<size_t>(oh) * ow;
  const int K = a.ic * a.kh * a.kw;
  const int ow_pad = (ow + 15) / 16 * 16;

  thread_local std::vector<float> slab;
  thread_local std::vector<float> crows;
  slab.resize(static_cast<size_t>(K) * ow_pad);
  crows.resize(static_cast<size_t>(a.oc) * ow_pad);

  for (int y = 0; y < oh; ++y) {
    // build the slab for this output row
    for (int ic = 0; ic < a.ic; ++ic) {
      const float* inp = a.in + static_cast<size_t>(ic) * in_plane;
      for (int dy = 0; dy < a.kh; ++dy) {
        const int sy = y * a.stride - a.pt + dy;
        float* krow0 = slab.data() + (static_cast<size_t>(ic) * a.kh + dy) * a.kw * ow_pad;
        if (sy < 0 || sy >= a.ih) {
          std::memset(krow0, 0, sizeof(float) * a.kw * ow_pad);
          continue;
        }
        const float* srow = inp + static_cast<size_t>(sy) * a.iw;
        for (int dx = 0; dx < a.kw; ++dx) {
          float* krow = krow0 + static_cast<size_t>(dx) * ow_pad;
          if (a.stride == 1) {
            // x - pl + dx must land in [0, iw)
            const int x0 = std::clamp(a.pl - dx, 0, ow);
            const int x1 = std::clamp(a.iw + a.pl - dx, 0, ow);
            if (x0 > 0) std::memset(krow, 0, sizeof(float) * x0);
            if (x1 > x0) std::memcpy(krow + x0, srow + (x0 - a.pl + dx), sizeof(float) * (x1 - x0));
            if (ow_pad > x1) std::memset(krow + x1, 0, sizeof(float) * (ow_pad - x1));
          } else {
            for (int x = 0; x < ow; ++x) {
              const int sx = x * a.stride - a.pl + dx;
              krow[x] = (sx >= 0 && sx < a.iw) ? srow[sx] : 0.0f;
            }
            std::memset(krow + ow, 0, sizeof(float) * (ow_pad - ow));
          }
        }
      }
    }
    // C = bias, then accumulate the GEMM
    for (int oc = 0; oc < a.oc; ++oc) {
      float* crow = crows.data() + static_cast<size_t>(oc) * ow_pad;
      const float b = a.bias ? a.bias[oc] : 0.0f;
      for (int x = 0; x < ow_pad; ++x) crow[x] = b;
    }
    for (int j = 0; j + 16 <= ow_pad; j += 16)
      gemm_block16(a.w, K, slab.data() + j, ow_pad, crows.data() + j, ow_pad, a.oc, K, true);
    for (int oc = 0; oc < a.oc; ++oc)
      std::memcpy(a.out + static_cast<size_t>(oc) * out_plane + static_cast<size_t>(y) * ow,
                  crows.data() + static_cast<size_t>(oc) * ow_pad, sizeof(float) * ow);
  }
}

void relu_avx2(float* p, size_t n) {
  const __m256 z = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(p + i, _mm256_max_ps(_mm256_loadu_ps(p + i), z));
  for (; i < n; ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
}

void silu_avx2(float* p, size_t n) {
  // exp stays in libm; a vector approximation would diverge from scalar.
  for (size_t i = 0; i < n; ++i) p[i] = p[i] / (1.0f + std::exp(-p[i]));
}

void scale_add_avx2(float* p, size_t n, float a, float b) {
  const __m256 va = _mm256_set1_ps(a);
  const __m256 vb = _mm256_set1_ps(b);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(p + i, _mm256_fmadd_ps(_mm256_loadu_ps(p + i), va, vb));
  for (; i < n; ++i) p[i] = std::fma(p[i], a, b);
}

double sum_avx2(const float* p, size_t n) {
  // Blocked: vector-sum 4096-element blocks in f32, accumulate blocks in f64.
  double total = 0.0;
  size_t i = 0;
  while (i < n) {
    const size_t end = std::min(n, i + 4096);
    __m256 acc = _mm256_setzero_ps();
    for (; i + 8 <= end; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(p + i));
    float s = hsum256(acc);
    for (; i < end; ++i) s += p[i];
    total += s;
  }
  return total;
}

double sumsq_avx2(const float* p, size_t n) {
  double total = 0.0;
  size_t i = 0;
  while (i < n) {
    const size_t end = std::min(n, i + 4096);
    __m256 acc = _mm256_setzero_ps();
    for (; i + 8 <= end; i += 8) {
      const __m256 v = _mm256_loadu_ps(p + i);
      acc = _mm256_fmadd_ps(v, v, acc);
    }
    float s = hsum256(acc);
    for (; i < end; ++i) s += p[i] * p[i];
    total += s;
  }
  return total;
}

double sqdiff_sum_avx2(const float* a, const float* b, size_t n) {
  double total = 0.0;
  size_t i = 0;
  while (i < n) {
    const size_t end = std::min(n, i + 4096);
    __m256 acc = _mm256_setzero_ps();
    for (; i + 8 <= end; i += 8) {
      const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
      acc = _mm256_fmadd_ps(d, d, acc);
    }
    float s = hsum256(acc);
    for (; i < end; ++i) {
      const float d = a[i] - b[i];
      s += d * d;
    }
    total += s;
  }
  return total;
}

void wsqdiff_accum_avx2(const float* a, const float* b, float wc, float* out, size_t n) {
  const __m256 w = _mm256_set1_ps(wc);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    const __m256 o = _mm256_fmadd_ps(_mm256_mul_ps(w, d), d, _mm256_loadu_ps(out + i));
    _mm256_storeu_ps(out + i, o);
  }
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    out[i] += wc * d * d;
  }
}

void sq_accum_avx2(const float* p, float* acc, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(p + i);
    _mm256_storeu_ps(acc + i, _mm256_fmadd_ps(v, v, _mm256_loadu_ps(acc + i)));
  }
  for (; i < n; ++i) acc[i] += p[i] * p[i];
}

void mul_rows_avx2(float* p, const float* scale, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(p + i, _mm256_mul_ps(_mm256_loadu_ps(p + i), _mm256_loadu_ps(scale + i)));
  for (; i < n; ++i) p[i] *= scale[i];
}

void sep_conv_h_avx2(const float* in, float* out, int h, int w, const float* taps, int r) {
  const int lo = r, hi = w - r;  // interior columns with all taps in-bounds
  for (int y = 0; y < h; ++y) {
    const float* row = in + static_cast<size_t>(y) * w;
    float* orow = out + static_cast<size_t>(y) * w;
    for (int x = 0; x < std::min(lo, w); ++x) {
      float s = 0.0f;
      for (int t = -r; t <= r; ++t) s += taps[t + r] * row[std::clamp(x + t, 0, w - 1)];
      orow[x] = s;
    }
    int x = lo;
    for (; x + 8 <= hi; x += 8) {
      __m256 acc = _mm256_setzero_ps();
      for (int t = -r; t <= r; ++t)
        acc = _mm256_fmadd_ps(_mm256_set1_ps(taps[t + r]), _mm256_loadu_ps(row + x + t), acc);
      _mm256_storeu_ps(orow + x, acc);
    }
    for (; x < w; ++x) {
      float s = 0.0f;
      for (int t = -r; t <= r; ++t) s += taps[t + r] * row[std::clamp(x + t, 0, w - 1)];
      orow[x] = s;
    }
  }
}

void sep_conv_v_avx2(const float* in, float* out, int h, int w, const float* taps, int r) {
  for (int y = 0; y < h; ++y) {
    float* orow = out + static_cast<size_t>(y) * w;
    int x = 0;
    for (; x + 8 <= w; x += 8) {
      __m256 acc = _mm256_setzero_ps();
      for (int t = -r; t <= r; ++t) {
        const int sy = std::clamp(y + t, 0, h - 1);
        acc = _mm256_fmadd_ps(_mm256_set1_ps(taps[t + r]),
                              _mm256_loadu_ps(in + static_cast<size_t>(sy) * w + x), acc);
      }
      _mm256_storeu_ps(orow + x, acc);
    }
    for (; x < w; ++x) {
      float s = 0.0f;
      for (int t = -r; t <= r; ++t) {
        const int sy = std::clamp(y + t, 0, h - 1);
        s += taps[t + r] * in[static_cast<size_t>(sy) * w + x];
      }
      orow[x] = s;
    }
  }
}

}  // namespace

const Impl* avx2_impl_x86() {
  static const Impl impl = {
      "avx2",        conv2d_avx2,       sgemm_avx2,   relu_avx2,
      silu_avx2,     scale_add_avx2,    sum_avx2,     sumsq_avx2,
      sqdiff_sum_avx2, wsqdiff_accum_avx2, sq_accum_avx2, mul_rows_avx2,
      sep_conv_h_avx2, sep_conv_v_avx2,
  };
  return &impl;
}

}  // namespace aerodetect::kern

#else

namespace aerodetect::kern {
const Impl* avx2_impl_x86() { return nullptr; }
}  // namespace aerodetect::kern

#endif
