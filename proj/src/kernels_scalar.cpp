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

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aerodetect/kernels.hpp"

namespace aerodetect::kern {
namespace {

void conv2d_scalar(const Conv2dArgs& a) {
  const int oh = conv_out_dim(a.ih, a.kh, a.pt, a.pb, a.stride);
  const int ow = conv_out_dim(a.iw, a.kw, a.pl, a.pr, a.stride);
  const size_t in_plane = static_cast<size_t>(a.ih) * a.iw;
  const size_t out_plane = static_cast<size_t>(oh) * ow;
  for (int oc = 0; oc < a.oc; ++oc) {
    float* outp = a.out + static_cast<size_t>(oc) * out_plane;
    const float b = a.bias ? a.bias[oc] : 0.0f;
    std::fill(outp, outp + out_plane, b);
    const float* wc = a.w + static_cast<size_t>(oc) * a.ic * a.kh * a.kw;
    for (int ic = 0; ic < a.ic; ++ic) {
      const float* inp = a.in + static_cast<size_t>(ic) * in_plane;
      for (int kh = 0; kh < a.kh; ++kh) {
        for (int kw = 0; kw < a.kw; ++kw) {
          const float wv = wc[(static_cast<size_t>(ic) * a.kh + kh) * a.kw + kw];
          if (wv == 0.0f) continue;
          for (int y = 0; y < oh; ++y) {
            const int sy = y * a.stride - a.pt + kh;
            if (sy < 0 || sy >= a.ih) continue;
            const float* row = inp + static_cast<size_t>(sy) * a.iw;
            float* orow = outp + static_cast<size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) {
              const int sx = x * a.stride - a.pl + kw;
              if (sx < 0 || sx >= a.iw) continue;
              orow[x] += wv * row[sx];
            }
          }
        }
      }
    }
  }
}

void sgemm_scalar(const float* A, const float* B, float* C, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    float* crow = C + static_cast<size_t>(i) * n;
    if (!acc) std::fill(crow, crow + n, 0.0f);
    for (int kk = 0; kk < k; ++kk) {
      const float av = A[static_cast<size_t>(i) * k + kk];
      if (av == 0.0f) continue;
      const float* brow = B + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void relu_scalar(float* p, size_t n) {
  for (size_t i = 0; i < n; ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
}

void silu_scalar(float* p, size_t n) {
  for (size_t i = 0; i < n; ++i) p[i] = p[i] / (1.0f + std::exp(-p[i]));
}

void scale_add_scalar(float* p, size_t n, float a, float b) {
  for (size_t i = 0; i < n; ++i) p[i] = p[i] * a + b;
}

double sum_scalar(const float* p, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

double sumsq_scalar(const float* p, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += static_cast<double>(p[i]) * p[i];
  return s;
}

double sqdiff_sum_scalar(const float* a, const float* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

void wsqdiff_accum_scalar(const float* a, const float* b, float wc, float* out, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const float d = a[i] - b[i];
    out[i] += wc * d * d;
  }
}

void sq_accum_scalar(const float* p, float* acc, size_t n) {
  for (size_t i = 0; i < n; ++i) acc[i] += p[i] * p[i];
}

void mul_rows_scalar(float* p, const float* scale, size_t n) {
  for (size_t i = 0; i < n; ++i) p[i] *= scale[i];
}

void sep_conv_h_scalar(const float* in, float* out, int h, int w, const float* taps, int r) {
  for (int y = 0; y < h; ++y) {
    const float* row = in + static_cast<size_t>(y) * w;
    float* orow = out + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int t = -r; t <= r; ++t) {
        const int sx = std::clamp(x + t, 0, w - 1);
        s += taps[t + r] * row[sx];
      }
      orow[x] = s;
    }
  }
}

void sep_conv_v_scalar(const float* in, float* out, int h, int w, const float* taps, int r) {
  for (int y = 0; y < h; ++y) {
    float* orow = out + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) orow[x] = 0.0f;
    for (int t = -r; t <= r; ++t) {
      const int sy = std::clamp(y + t, 0, h - 1);
      const float* row = in + static_cast<size_t>(sy) * w;
      const float tv = taps[t + r];
      for (int x = 0; x < w; ++x) orow[x] += tv * row[x];
    }
  }
}

}  // namespace

const Impl& scalar() {
  static const Impl impl = {
      "scalar",        conv2d_scalar,       sgemm_scalar,   relu_scalar,
      silu_scalar,     scale_add_scalar,    sum_scalar,     sumsq_scalar,
      sqdiff_sum_scalar, wsqdiff_accum_scalar, sq_accum_scalar, mul_rows_scalar,
      sep_conv_h_scalar, sep_conv_v_scalar,
  };
  return impl;
}

int pool_out_dim(int in, int k, int stride, bool ceil_mode) {
  const int num = in - k;
  int out = ceil_mode ? (num + stride - 1) / stride + 1 : num / stride + 1;
  if (ceil_mode && (out - 1) * stride >= in) --out;  // last window must start inside
  return out;
}

void maxpool2d(const float* in, int c, int h, int w, int k, int stride, bool ceil_mode,
               float* out, int oh, int ow) {
  const size_t in_plane = static_cast<size_t>(h) * w;
  const size_t out_plane = static_cast<size_t>(oh) * ow;
  for (int ch = 0; ch < c; ++ch) {
    const float* inp = in + ch * in_plane;
    float* outp = out + ch * out_plane;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const int y0 = y * stride, x0 = x * stride;
        const int y1 = std::min(y0 + k, h), x1 = std::min(x0 + k, w);
        float m = -INFINITY;
        for (int sy = y0; sy < y1; ++sy)
          for (int sx = x0; sx < x1; ++sx) m = std::max(m, inp[static_cast<size_t>(sy) * w + sx]);
        outp[static_cast<size_t>(y) * ow + x] = m;
      }
    }
  }
}

void avgpool2x2(const float* in, int c, int h, int w, float* out) {
  const int oh = h / 2, ow = w / 2;
  const size_t in_plane = static_cast<size_t>(h) * w;
  const size_t out_plane = static_cast<size_t>(oh) * ow;
  for (int ch = 0; ch < c; ++ch) {
    const float* inp = in + ch * in_plane;
    float* outp = out + ch * out_plane;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const float* p = inp + static_cast<size_t>(2 * y) * w + 2 * x;
        outp[static_cast<size_t>(y) * ow + x] = 0.25f * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  }
}

void resize_bilinear(const float* in, int ih, int iw, float* out, int oh, int ow) {
  const double sy = static_cast<double>(ih) / oh;
  const double sx = static_cast<double>(iw) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(ih - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, ih - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(iw - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, iw - 1);
      const float wx = static_cast<float>(fx - x0);
      const float a = in[static_cast<size_t>(y0) * iw + x0];
      const float b = in[static_cast<size_t>(y0) * iw + x1];
      const float c = in[static_cast<size_t>(y1) * iw + x0];
      const float d = in[static_cast<size_t>(y1) * iw + x1];
      out[static_cast<size_t>(y) * ow + x] =
          (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * c + wx * d);
    }
  }
}

namespace {
inline void cubic_weights(double t, float wgt[4]) {
  // a = -0.75
  const double A = -0.75;
  const double t1 = t + 1.0, t2 = t, t3 = 1.0 - t, t4 = 2.0 - t;
  wgt[0] = static_cast<float>(((A * t1 - 5 * A) * t1 + 8 * A) * t1 - 4 * A);
  wgt[1] = static_cast<float>(((A + 2) * t2 - (A + 3)) * t2 * t2 + 1);
  wgt[2] = static_cast<float>(((A + 2) * t3 - (A + 3)) * t3 * t3 + 1);
  wgt[3] = static_cast<float>(((A * t4 - 5 * A) * t4 + 8 * A) * t4 - 4 * A);
}
}  // namespace

void resize_bicubic(const float* in, int ih, int iw, float* out, int oh, int ow) {
  const double sy = static_cast<double>(ih) / oh;
  const double sx = static_cast<double>(iw) / ow;
  for (int y = 0; y < oh; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    float wy[4];
    cubic_weights(fy - y0, wy);
    for (int x = 0; x < ow; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      float wx[4];
      cubic_weights(fx - x0, wx);
      float acc = 0.0f;
      for (int j = 0; j < 4; ++j) {
        const int syi = std::clamp(y0 - 1 + j, 0, ih - 1);
        const float* row = in + static_cast<size_t>(syi) * iw;
        float rowacc = 0.0f;
        for (int i = 0; i < 4; ++i) {
          const int sxi = std::clamp(x0 - 1 + i, 0, iw - 1);
          rowacc += wx[i] * row[sxi];
        }
        acc += wy[j] * rowacc;
      }
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
}

void upsample_nearest2x(const float* in, int h, int w, float* out) {
  const int ow = 2 * w;
  for (int y = 0; y < h; ++y) {
    const float* row = in + static_cast<size_t>(y) * w;
    float* o0 = out + static_cast<size_t>(2 * y) * ow;
    float* o1 = o0 + ow;
    for (int x = 0; x < w; ++x) {
      o0[2 * x] = o0[2 * x + 1] = row[x];
    }
    std::memcpy(o1, o0, sizeof(float) * ow);
  }
}

void softmax_rows(float* m, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    float* row = m + static_cast<size_t>(i) * cols;
    float mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    const float inv = static_cast<float>(1.0 / s);
    for (int j = 0; j < cols; ++j) row[j] *= inv;
  }
}

void min_max(const float* p, size_t n, float* lo, float* hi) {
  float l = p[0], h = p[0];
  for (size_t i = 1; i < n; ++i) {
    l = std::min(l, p[i]);
    h = std::max(h, p[i]);
  }
  *lo = l;
  *hi = h;
}

void quantize_u16_grid(float* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const float c = std::clamp(p[i], 0.0f, 1.0f);
    p[i] = static_cast<float>(std::lround(c * 65535.0f)) / 65535.0f;
  }
}

}  // namespace aerodetect::kern
