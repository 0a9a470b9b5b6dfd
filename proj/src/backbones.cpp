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

#include "aerodetect/backbones.hpp"

#include <cmath>
#include <cstring>

#include "aerodetect/common.hpp"
#include "aerodetect/kernels.hpp"

namespace aerodetect {

namespace {

Tensor3 named_conv(const WeightBundle& wb, const std::string& base, const Tensor3& in, int stride,
                   int pad) {
  const NamedTensor& w = wb.tensor(base + ".weight");
  const NamedTensor& b = wb.tensor(base + ".bias");
  const int oc = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[1] != in.c)
    throw IoError("conv " + base + " expects " + std::to_string(w.shape[1]) + " channels, got " +
                  std::to_string(in.c));
  Tensor3 out(oc, kern::conv_out_dim(in.h, kh, pad, pad, stride),
              kern::conv_out_dim(in.w, kw, pad, pad, stride));
  kern::Conv2dArgs a;
  a.in = in.data();
  a.ic = in.c;
  a.ih = in.h;
  a.iw = in.w;
  a.w = w.data.data();
  a.bias = b.data.data();
  a.out = out.data();
  a.oc = oc;
  a.kh = kh;
  a.kw = kw;
  a.stride = stride;
  a.pt = a.pl = a.pb = a.pr = pad;
  kern::active().conv2d(a);
  return out;
}

Tensor3 conv_layer(const WeightBundle& wb, int index, const Tensor3& in, int stride, int pad) {
  return named_conv(wb, "features." + std::to_string(index), in, stride, pad);
}

void relu(Tensor3& t) { kern::active().relu(t.data(), t.size()); }

Tensor3 maxpool(const Tensor3& in, int k, int stride, bool ceil_mode) {
  Tensor3 out(in.c, kern::pool_out_dim(in.h, k, stride, ceil_mode),
              kern::pool_out_dim(in.w, k, stride, ceil_mode));
  kern::maxpool2d(in.data(), in.c, in.h, in.w, k, stride, ceil_mode, out.data(), out.h, out.w);
  return out;
}

// sqrt(conv(x^2, hann3x3)) with stride 2, padding 1.
Tensor3 l2pool(const Tensor3& in) {
  static const float hann1d[3] = {0.5f, 1.0f, 0.5f};
  float k2d[9];
  float s = 0.0f;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      k2d[i * 3 + j] = hann1d[i] * hann1d[j];
      s += k2d[i * 3 + j];
    }
  for (float& v : k2d) v /= s;

  Tensor3 sq = in;
  for (float& v : sq.v) v *= v;

  // depthwise: run the 3x3 kernel per channel
  Tensor3 out(in.c, kern::conv_out_dim(in.h, 3, 1, 1, 2), kern::conv_out_dim(in.w, 3, 1, 1, 2));
  for (int c = 0; c < in.c; ++c) {
    kern::Conv2dArgs a;
    a.in = sq.plane(c);
    a.ic = 1;
    a.ih = in.h;
    a.iw = in.w;
    a.w = k2d;
    a.bias = nullptr;
    a.out = out.plane(c);
    a.oc = 1;
    a.kh = 3;
    a.kw = 3;
    a.stride = 2;
    a.pt = a.pl = a.pb = a.pr = 1;
    kern::active().conv2d(a);
  }
  for (float& v : out.v) v = std::sqrt(v + 1e-12f);
  return out;
}

Tensor3 fire(const WeightBundle& wb, int index, const Tensor3& in) {
  const std::string base = "features." + std::to_string(index);
  Tensor3 s = named_conv(wb, base + ".squeeze", in, 1, 0);
  relu(s);
  Tensor3 e1 = named_conv(wb, base + ".expand1x1", s, 1, 0);
  relu(e1);
  Tensor3 e3 = named_conv(wb, base + ".expand3x3", s, 1, 1);
  relu(e3);
  Tensor3 out(e1.c + e3.c, e1.h, e1.w);
  std::memcpy(out.data(), e1.data(), e1.size() * sizeof(float));
  std::memcpy(out.data() + e1.size(), e3.data(), e3.size() * sizeof(float));
  return out;
}

std::vector<Tensor3> vgg16_features(const WeightBundle& wb, const Tensor3& in, bool l2pooling,
                                    int max_stage) {
  // conv indices per stage; max-pools sit between stages
  static const int stages[5][3] = {{0, 2, -1}, {5, 7, -1}, {10, 12, 14}, {17, 19, 21}, {24, 26, 28}};
  std::vector<Tensor3> out;
  Tensor3 h = in;
  for (int s = 0; s < 5; ++s) {
    if (max_stage > 0 && s >= max_stage) break;
    if (s > 0) h = l2pooling ? l2pool(h) : maxpool(h, 2, 2, false);
    for (int idx : stages[s]) {
      if (idx < 0) continue;
      h = conv_layer(wb, idx, h, 1, 1);
      relu(h);
    }
    out.push_back(h);
  }
  return out;
}

std::vector<Tensor3> alexnet_features(const WeightBundle& wb, const Tensor3& in, int max_stage) {
  std::vector<Tensor3> out;
  auto done = [&] { return max_stage > 0 && static_cast<int>(out.size()) >= max_stage; };
  Tensor3 h = conv_layer(wb, 0, in, 4, 2);
  relu(h);
  out.push_back(h);
  if (done()) return out;
  h = maxpool(h, 3, 2, false);
  h = conv_layer(wb, 3, h, 1, 2);
  relu(h);
  out.push_back(h);
  if (done()) return out;
  h = maxpool(h, 3, 2, false);
  h = conv_layer(wb, 6, h, 1, 1);
  relu(h);
  out.push_back(h);
  if (done()) return out;
  h = conv_layer(wb, 8, h, 1, 1);
  relu(h);
  out.push_back(h);
  if (done()) return out;
  h = conv_layer(wb, 10, h, 1, 1);
  relu(h);
  out.push_back(h);
  return out;
}

std::vector<Tensor3> squeezenet_features(const WeightBundle& wb, const Tensor3& in,
                                         int max_stage) {
  std::vector<Tensor3> out;
  auto done = [&] { return max_stage > 0 && static_cast<int>(out.size()) >= max_stage; };
  Tensor3 h = conv_layer(wb, 0, in, 2, 0);
  relu(h);
  out.push_back(h);
  if (done()) return out;
  h = maxpool(h, 3, 2, true);
  h = fire(wb, 3, h);
  h = fire(wb, 4, h);
  out.push_back(h);
  if (done()) return out;
  h = maxpool(h, 3, 2, true);
  h = fire(wb, 6, h);
  h = fire(wb, 7, h);
  out.push_back(h);
  if (done()) return out;
  h = maxpool(h, 3, 2, true);
  h = fire(wb, 9, h);
  out.push_back(h);
  if (done()) return out;
  h = fire(wb, 10, h);
  out.push_back(h);
  if (done()) return out;
  h = fire(wb, 11, h);
  out.push_back(h);
  if (done()) return out;
  h = fire(wb, 12, h);
  out.push_back(h);
  return out;
}

}  // namespace

std::string backbone_name(Backbone b) {
  switch (b) {
    case Backbone::kVgg16: return "vgg16";
    case Backbone::kAlexNet: return "alexnet";
    default: return "squeezenet";
  }
}

Backbone backbone_from_name(const std::string& s) {
  if (s == "vgg16") return Backbone::kVgg16;
  if (s == "alexnet") return Backbone::kAlexNet;
  if (s == "squeezenet") return Backbone::kSqueezeNet;
  throw UsageError("unknown backbone '" + s + "' (known: vgg16, alexnet, squeezenet)");
}

int backbone_num_stages(Backbone b) { return b == Backbone::kSqueezeNet ? 7 : 5; }

std::vector<int> backbone_stage_channels(Backbone b) {
  switch (b) {
    case Backbone::kVgg16: return {64, 128, 256, 512, 512};
    case Backbone::kAlexNet: return {64, 192, 384, 256, 256};
    default: return {64, 128, 256, 384, 384, 512, 512};
  }
}

int backbone_min_input(Backbone b) {
  (void)b;
  return 32;
}

std::vector<Tensor3> extract_features(Backbone b, const WeightBundle& w, const Tensor3& in,
                                      int max_stage) {
  switch (b) {
    case Backbone::kVgg16: return vgg16_features(w, in, false, max_stage);
    case Backbone::kAlexNet: return alexnet_features(w, in, max_stage);
    default: return squeezenet_features(w, in, max_stage);
  }
}

std::vector<Tensor3> extract_features_vgg_l2pool(const WeightBundle& w, const Tensor3& in) {
  return vgg16_features(w, in, true, 0);
}

}  // namespace aerodetect
