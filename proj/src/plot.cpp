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

#include "aerodetect/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "aerodetect/image.hpp"

namespace aerodetect {

namespace {

struct Rgb {
  float r, g, b;
};
constexpr Rgb kReal{0.22f, 0.42f, 0.69f};
constexpr Rgb kGen{0.85f, 0.37f, 0.22f};
constexpr Rgb kInk{0.15f, 0.15f, 0.15f};

struct Canvas {
  Tensor3 px;
  Canvas(int h, int w) : px(3, h, w, 1.0f) {}

  void fill_rect(int y0, int x0, int y1, int x1, Rgb c, float alpha = 1.0f) {
    y0 = std::clamp(y0, 0, px.h);
    y1 = std::clamp(y1, 0, px.h);
    x0 = std::clamp(x0, 0, px.w);
    x1 = std::clamp(x1, 0, px.w);
    const float col[3] = {c.r, c.g, c.b};
    for (int ch = 0; ch < 3; ++ch)
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          float& v = px.at(ch, y, x);
          v = (1.0f - alpha) * v + alpha * col[ch];
        }
  }

  void hline(int y, int x0, int x1, Rgb c) { fill_rect(y, x0, y + 1, x1, c); }
  void vline(int x, int y0, int y1, Rgb c) { fill_rect(y0, x, y1, x + 1, c); }
  void text(int y, int x, const std::string& s, Rgb c);
};

// 5x7 bitmap glyphs for the characters the charts actually print.
const char* glyph(char ch) {
  switch (ch) {
    case '0': return "01110 10001 10011 10101 11001 10001 01110";
    case '1': return "00100 01100 00100 00100 00100 00100 01110";
    case '2': return "01110 10001 00001 00010 00100 01000 11111";
    case '3': return "11110 00001 00001 01110 00001 00001 11110";
    case '4': return "00010 00110 01010 10010 11111 00010 00010";
    case '5': return "11111 10000 11110 00001 00001 10001 01110";
    case '6': return "00110 01000 10000 11110 10001 10001 01110";
    case '7': return "11111 00001 00010 00100 01000 01000 01000";
    case '8': return "01110 10001 10001 01110 10001 10001 01110";
    case '9': return "01110 10001 10001 01111 00001 00010 01100";
    case '.': return "00000 00000 00000 00000 00000 00110 00110";
    case '-': return "00000 00000 00000 01110 00000 00000 00000";
    case '%': return "11001 11010 00010 00100 01000 01011 10011";
    case '=': return "00000 00000 11111 00000 11111 00000 00000";
    case '/': return "00001 00010 00010 00100 01000 01000 10000";
    case ':': return "00000 00110 00110 00000 00110 00110 00000";
    case 'a': return "00000 00000 01110 00001 01111 10001 01111";
    case 'b': return "10000 10000 11110 10001 10001 10001 11110";
    case 'c': return "00000 00000 01111 10000 10000 10000 01111";
    case 'd': return "00001 00001 01111 10001 10001 10001 01111";
    case 'e': return "00000 00000 01110 10001 11111 10000 01110";
    case 'f': return "00110 01000 11110 01000 01000 01000 01000";
    case 'g': return "00000 01111 10001 10001 01111 00001 01110";
    case 'h': return "10000 10000 11110 10001 10001 10001 10001";
    case 'i': return "00100 00000 01100 00100 00100 00100 01110";
    case 'j': return "00010 00000 00110 00010 00010 10010 01100";
    case 'k': return "10000 10000 10010 10100 11000 10100 10010";
    case 'l': return "01100 00100 00100 00100 00100 00100 01110";
    case 'm': return "00000 00000 11010 10101 10101 10101 10101";
    case 'n': return "00000 00000 11110 10001 10001 10001 10001";
    case 'o': return "00000 00000 01110 10001 10001 10001 01110";
    case 'p': return "00000 11110 10001 10001 11110 10000 10000";
    case 'q': return "00000 01111 10001 10001 01111 00001 00001";
    case 'r': return "00000 00000 10110 11000 10000 10000 10000";
    case 's': return "00000 00000 01111 10000 01110 00001 11110";
    case 't': return "01000 01000 11110 01000 01000 01001 00110";
    case 'u': return "00000 00000 10001 10001 10001 10011 01101";
    case 'v': return "00000 00000 10001 10001 10001 01010 00100";
    case 'w': return "00000 00000 10101 10101 10101 10101 01010";
    case 'x': return "00000 00000 10001 01010 00100 01010 10001";
    case 'y': return "00000 10001 10001 10001 01111 00001 01110";
    case 'z': return "00000 00000 11111 00010 00100 01000 11111";
    default: return nullptr;  // space and unknowns advance the cursor
  }
}

void Canvas::text(int y, int x, const std::string& s, Rgb c) {
  for (char raw : s) {
    const char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    const char* g = glyph(ch);
    if (g) {
      int row = 0, col = 0;
      for (const char* p = g; *p; ++p) {
        if (*p == ' ') {
          ++row;
          col = 0;
          continue;
        }
        if (*p == '1') fill_rect(y + row, x + col, y + row + 1, x + col + 1, c);
        ++col;
      }
    }
    x += 6;
  }
}

std::string fmt_num(double v) {
  char buf[32];
  if (std::abs(v) >= 1000 || v == std::floor(v))
    snprintf(buf, sizeof(buf), "%.0f", v);
  else
    snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

void plot_histogram_png(const Histogram& h, const std::string& title,
                        const std::filesystem::path& path) {
  const int W = 640, H = 360, ml = 50, mr = 15, mt = 30, mb = 40;
  Canvas cv(H, W);
  cv.text(8, ml, title, kInk);

  const int bins = static_cast<int>(h.real.size());
  int peak = 1;
  for (int v : h.real) peak = std::max(peak, v);
  for (int v : h.generated) peak = std::max(peak, v);

  const int plot_w = W - ml - mr, plot_h = H - mt - mb;
  for (int b = 0; b < bins; ++b) {
    const int x0 = ml + b * plot_w / bins;
    const int x1 = ml + (b + 1) * plot_w / bins;
    const int hr = h.real[b] * plot_h / peak;
    const int hg = h.generated[b] * plot_h / peak;
    cv.fill_rect(mt + plot_h - hr, x0, mt + plot_h, x1 - 1, kReal, 0.55f);
    cv.fill_rect(mt + plot_h - hg, x0, mt + plot_h, x1 - 1, kGen, 0.55f);
  }
  cv.hline(mt + plot_h, ml, W - mr, kInk);
  cv.vline(ml - 1, mt, mt + plot_h + 1, kInk);
  cv.text(H - mb + 8, ml, fmt_num(h.lo), kInk);
  const std::string hi = fmt_num(h.hi);
  cv.text(H - mb + 8, W - mr - static_cast<int>(hi.size()) * 6, hi, kInk);
  cv.text(H - mb + 20, ml, "real", kReal);
  cv.text(H - mb + 20, ml + 40, "generated", kGen);
  save_png8(cv.px, path);
}

void plot_bars_png(const std::map<std::string, double>& values, const std::string& title,
                   const std::filesystem::path& path) {
  const int W = 640, H = 360, ml = 50, mr = 15, mt = 30, mb = 60;
  Canvas cv(H, W);
  cv.text(8, ml, title, kInk);
  const int n = static_cast<int>(values.size());
  if (n == 0) {
    save_png8(cv.px, path);
    return;
  }
  const int plot_w = W - ml - mr, plot_h = H - mt - mb;
  int i = 0;
  for (const auto& [name, v] : values) {
    const int x0 = ml + i * plot_w / n + 6;
    const int x1 = ml + (i + 1) * plot_w / n - 6;
    const double clamped = std::clamp(v, 0.0, 1.0);
    const int bh = static_cast<int>(clamped * plot_h);
    cv.fill_rect(mt + plot_h - bh, x0, mt + plot_h, x1, kReal, 0.9f);
    cv.text(H - mb + 8, x0, name.substr(0, 10), kInk);
    cv.text(mt + plot_h - bh - 10, x0, fmt_num(v), kInk);
    ++i;
  }
  cv.hline(mt + plot_h, ml, W - mr, kInk);
  save_png8(cv.px, path);
}

void plot_density_png(const std::vector<std::pair<double, double>>& xy, int clip_count,
                      const std::string& title, const std::filesystem::path& path) {
  const int W = 640, H = 480, ml = 60, mr = 15, mt = 30, mb = 40, cells = 64;
  Canvas cv(H, W);
  cv.text(8, ml, title, kInk);
  if (xy.empty()) {
    save_png8(cv.px, path);
    return;
  }
  double xlo = xy[0].first, xhi = xlo, ylo = xy[0].second, yhi = ylo;
  for (const auto& [x, y] : xy) {
    xlo = std::min(xlo, x);
    xhi = std::max(xhi, x);
    ylo = std::min(ylo, y);
    yhi = std::max(yhi, y);
  }
  if (xhi <= xlo) xhi = xlo + 1;
  if (yhi <= ylo) yhi = ylo + 1;
  std::vector<int> grid(cells * cells, 0);
  for (const auto& [x, y] : xy) {
    const int cx = std::min(cells - 1, static_cast<int>((x - xlo) / (xhi - xlo) * cells));
    const int cy = std::min(cells - 1, static_cast<int>((y - ylo) / (yhi - ylo) * cells));
    ++grid[cy * cells + cx];
  }
  const int plot_w = W - ml - mr, plot_h = H - mt - mb;
  for (int cy = 0; cy < cells; ++cy)
    for (int cx = 0; cx < cells; ++cx) {
      const int cnt = std::min(grid[cy * cells + cx], clip_count);
      if (cnt == 0) continue;
      const float a = 0.15f + 0.85f * static_cast<float>(cnt) / clip_count;
      const int x0 = ml + cx * plot_w / cells;
      const int x1 = ml + (cx + 1) * plot_w / cells;
      // y axis points up
      const int y1 = mt + plot_h - cy * plot_h / cells;
      const int y0 = mt + plot_h - (cy + 1) * plot_h / cells;
      cv.fill_rect(y0, x0, y1, x1, kReal, a);
    }
  cv.hline(mt + plot_h, ml, W - mr, kInk);
  cv.vline(ml - 1, mt, mt + plot_h + 1, kInk);
  cv.text(H - mb + 8, ml, fmt_num(xlo), kInk);
  const std::string xh = fmt_num(xhi);
  cv.text(H - mb + 8, W - mr - static_cast<int>(xh.size()) * 6, xh, kInk);
  cv.text(mt + plot_h - 8, 4, fmt_num(ylo), kInk);
  cv.text(mt, 4, fmt_num(yhi), kInk);
  save_png8(cv.px, path);
}

}  // namespace aerodetect
