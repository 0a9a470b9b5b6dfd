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

#include "aerodetect/vae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aerodetect/common.hpp"
#include "aerodetect/kernels.hpp"

namespace aerodetect {

using nlohmann::json;

VaeConfig VaeConfig::from_json(const json& j) {
  VaeConfig c;
  c.kind = j.value("kind", std::string("kl-vae"));
  c.in_channels = j.value("in_channels", 3);
  c.base_channels = j.value("base_channels", 128);
  c.channel_mult = j.value("channel_mult", std::vector<int>{1, 2, 4, 4});
  c.layers_per_block = j.value("layers_per_block", 2);
  c.latent_channels = j.value("latent_channels", 4);
  c.norm_groups = j.value("norm_groups", 32);
  c.norm_eps = j.value("norm_eps", 1e-6f);
  c.mid_attention = j.value("mid_attention", true);
  c.decoder_norm = j.value("decoder_norm", std::string("group"));
  c.codebook_size = j.value("codebook_size", 0);
  return c;
}

json VaeConfig::to_json() const {
  return json{{"kind", kind},
              {"in_channels", in_channels},
              {"base_channels", base_channels},
              {"channel_mult", channel_mult},
              {"layers_per_block", layers_per_block},
              {"latent_channels", latent_channels},
              {"norm_groups", norm_groups},
              {"norm_eps", norm_eps},
              {"mid_attention", mid_attention},
              {"decoder_norm", decoder_norm},
              {"codebook_size", codebook_size}};
}

namespace {

struct Ctx {
  const WeightBundle& w;
  const VaeConfig& cfg;
  const Tensor3* zq = nullptr;  // spatial-norm conditioning (vq decoders)
};

Tensor3 conv(const Ctx& ctx, const std::string& name, const Tensor3& in, int stride = 1,
             int pad = 1, int pb_extra = -1) {
  const NamedTensor& wt = ctx.w.tensor(name + ".weight");
  const NamedTensor& bt = ctx.w.tensor(name + ".bias");
  const int oc = wt.shape[0], kh = wt.shape[2], kw = wt.shape[3];
  const int pt = pad, pl = pad;
  const int pb = pb_extra >= 0 ? pb_extra : pad;
  const int pr = pb_extra >= 0 ? pb_extra : pad;
  Tensor3 out(oc, kern::conv_out_dim(in.h, kh, pt, pb, stride),
              kern::conv_out_dim(in.w, kw, pl, pr, stride));
  kern::Conv2dArgs a;
  a.in = in.data();
  a.ic = in.c;
  a.ih = in.h;
  a.iw = in.w;
  a.w = wt.data.data();
  a.bias = bt.data.data();
  a.out = out.data();
  a.oc = oc;
  a.kh = kh;
  a.kw = kw;
  a.stride = stride;
  a.pt = pt;
  a.pl = pl;
  a.pb = pb;
  a.pr = pr;
  kern::active().conv2d(a);
  return out;
}

void group_norm_affine(Tensor3& t, int groups, float eps, const float* gamma, const float* beta) {
  const int cpg = t.c / groups;
  const size_t plane = t.plane_size();
  for (int g = 0; g < groups; ++g) {
    float* base = t.plane(g * cpg);
    const size_t n = static_cast<size_t>(cpg) * plane;
    const double mean = kern::active().sum(base, n) / static_cast<double>(n);
    const double var = kern::active().sumsq(base, n) / static_cast<double>(n) - mean * mean;
    const float istd = static_cast<float>(1.0 / std::sqrt(std::max(var, 0.0) + eps));
    for (int c = 0; c < cpg; ++c) {
      const int ch = g * cpg + c;
      const float a = istd * gamma[ch];
      const float b = beta[ch] - static_cast<float>(mean) * istd * gamma[ch];
      kern::active().scale_add(t.plane(ch), plane, a, b);
    }
  }
}

void norm(const Ctx& ctx, const std::string& name, Tensor3& t, bool spatial_ok) {
  if (spatial_ok && ctx.cfg.decoder_norm == "spatial" && ctx.zq) {
    // f = GN(f) * conv_y(resize(zq)) + conv_b(resize(zq))
    const NamedTensor& g = ctx.w.tensor(name + ".norm_layer.weight");
    const NamedTensor& b = ctx.w.tensor(name + ".norm_layer.bias");
    group_norm_affine(t, ctx.cfg.norm_groups, ctx.cfg.norm_eps, g.data.data(), b.data.data());
    Tensor3 zq(ctx.zq->c, t.h, t.w);
    for (int c = 0; c < zq.c; ++c) {
      // nearest-neighbor resize of the conditioning latent
      for (int y = 0; y < t.h; ++y) {
        const int sy = y * ctx.zq->h / t.h;
        for (int x = 0; x < t.w; ++x)
          zq.at(c, y, x) = ctx.zq->at(c, sy, x * ctx.zq->w / t.w);
      }
    }
    Tensor3 scale = conv(ctx, name + ".conv_y", zq, 1, 0);
    Tensor3 shift = conv(ctx, name + ".conv_b", zq, 1, 0);
    for (size_t i = 0; i < t.size(); ++i) t.v[i] = t.v[i] * scale.v[i] + shift.v[i];
    return;
  }
  const NamedTensor& g = ctx.w.tensor(name + ".weight");
  const NamedTensor& b = ctx.w.tensor(name + ".bias");
  group_norm_affine(t, ctx.cfg.norm_groups, ctx.cfg.norm_eps, g.data.data(), b.data.data());
}

void silu(Tensor3& t) { kern::active().silu(t.data(), t.size()); }

Tensor3 resnet_block(const Ctx& ctx, const std::string& base, const Tensor3& in,
                     bool spatial_ok) {
  Tensor3 h = in;
  norm(ctx, base + ".norm1", h, spatial_ok);
  silu(h);
  h = conv(ctx, base + ".conv1", h);
  norm(ctx, base + ".norm2", h, spatial_ok);
  silu(h);
  h = conv(ctx, base + ".conv2", h);
  Tensor3 skip = in;
  if (ctx.w.has(base + ".conv_shortcut.weight")) skip = conv(ctx, base + ".conv_shortcut", in, 1, 0);
  for (size_t i = 0; i < h.size(); ++i) h.v[i] += skip.v[i];
  return h;
}

void transpose_to_tokens(const Tensor3& t, float* out) {  // (c,h,w) -> (hw, c)
  const size_t plane = t.plane_size();
  for (int c = 0; c < t.c; ++c) {
    const float* p = t.plane(c);
    for (size_t j = 0; j < plane; ++j) out[j * t.c + c] = p[j];
  }
}

// Single-head self-attention over spatial tokens, row-chunked to bound the
// score matrix size.
Tensor3 attention_block(const Ctx& ctx, const std::string& base, const Tensor3& in,
                        bool spatial_ok) {
  const int c = in.c;
  const size_t hw = in.plane_size();
  Tensor3 h = in;
  if (ctx.w.has(base + ".spatial_norm.norm_layer.weight") && spatial_ok && ctx.zq)
    norm(ctx, base + ".spatial_norm", h, true);
  else
    norm(ctx, base + ".group_norm", h, false);

  std::vector<float> tokens(hw * c);
  transpose_to_tokens(h, tokens.data());

  auto linear = [&](const std::string& name, const float* x, size_t rows, float* y) {
    // y(rows,c) = x(rows,c) * W^T + b, W is (c,c)
    const NamedTensor& wt = ctx.w.tensor(name + ".weight");
    const NamedTensor& bt = ctx.w.tensor(name + ".bias");
    std::vector<float> wT(static_cast<size_t>(c) * c);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) wT[static_cast<size_t>(j) * c + i] = wt.data[static_cast<size_t>(i) * c + j];
    kern::active().sgemm(x, wT.data(), y, static_cast<int>(rows), c, c, false);
    for (size_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) y[r * c + j] += bt.data[j];
  };

  std::vector<float> q(hw * c), k(hw * c), v(hw * c);
  linear(base + ".to_q", tokens.data(), hw, q.data());
  linear(base + ".to_k", tokens.data(), hw, k.data());
  linear(base + ".to_v", tokens.data(), hw, v.data());

  // kT (c, hw)
  std::vector<float> kT(hw * c);
  for (size_t r = 0; r < hw; ++r)
    for (int j = 0; j < c; ++j) kT[static_cast<size_t>(j) * hw + r] = k[r * c + j];

  const float scale = 1.0f / std::sqrt(static_cast<float>(c));
  std::vector<float> attn_out(hw * c);
  const size_t chunk = std::max<size_t>(1, (1u << 22) / std::max<size_t>(hw, 1));
  std::vector<float> scores(chunk * hw);
  for (size_t r0 = 0; r0 < hw; r0 += chunk) {
    const size_t rows = std::min(chunk, hw - r0);
    kern::active().sgemm(q.data() + r0 * c, kT.data(), scores.data(), static_cast<int>(rows), c,
                         static_cast<int>(hw), false);
    kern::active().scale_add(scores.data(), rows * hw, scale, 0.0f);
    kern::softmax_rows(scores.data(), static_cast<int>(rows), static_cast<int>(hw));
    kern::active().sgemm(scores.data(), v.data(), attn_out.data() + r0 * c,
                         static_cast<int>(rows), static_cast<int>(hw), c, false);
  }

  std::vector<float> proj(hw * c);
  linear(base + ".to_out.0", attn_out.data(), hw, proj.data());

  Tensor3 out = in;
  const size_t plane = out.plane_size();
  for (int ch = 0; ch < c; ++ch) {
    float* p = out.plane(ch);
    for (size_t j = 0; j < plane; ++j) p[j] += proj[j * c + ch];
  }
  return out;
}

}  // namespace

VaeModel::VaeModel(VaeConfig cfg, std::shared_ptr<const WeightBundle> weights)
    : cfg_(std::move(cfg)), w_(std::move(weights)) {}

Tensor3 VaeModel::encoder_forward(const Tensor3& in) const {
  Ctx ctx{*w_, cfg_, nullptr};
  const int nblocks = static_cast<int>(cfg_.channel_mult.size());
  Tensor3 h = conv(ctx, "encoder.conv_in", in);
  for (int b = 0; b < nblocks; ++b) {
    const std::string base = "encoder.down_blocks." + std::to_string(b);
    for (int r = 0; r < cfg_.layers_per_block; ++r)
      h = resnet_block(ctx, base + ".resnets." + std::to_string(r), h, false);
    if (b + 1 < nblocks)
      h = conv(ctx, base + ".downsamplers.0.conv", h, 2, 0, 1);  // pad right/bottom only
  }
  h = resnet_block(ctx, "encoder.mid_block.resnets.0", h, false);
  if (cfg_.mid_attention) h = attention_block(ctx, "encoder.mid_block.attentions.0", h, false);
  h = resnet_block(ctx, "encoder.mid_block.resnets.1", h, false);
  norm(ctx, "encoder.conv_norm_out", h, false);
  silu(h);
  return conv(ctx, "encoder.conv_out", h);
}

Tensor3 VaeModel::vq_quantize(const Tensor3& z) const {
  const NamedTensor& book = w_->tensor("quantize.embedding.weight");  // (n, d)
  const int n = book.shape[0], d = book.shape[1];
  if (d != z.c) throw IoError("codebook dimension mismatch");
  Tensor3 out(z.c, z.h, z.w);
  const size_t plane = z.plane_size();
  std::vector<float> vec(d);
  for (size_t j = 0; j < plane; ++j) {
    for (int c = 0; c < d; ++c) vec[c] = z.v[c * plane + j];
    int best = 0;
    double best_dist = 1e300;
    for (int k = 0; k < n; ++k) {
      const float* e = book.data.data() + static_cast<size_t>(k) * d;
      double dist = 0.0;
      for (int c = 0; c < d; ++c) {
        const double diff = static_cast<double>(vec[c]) - e[c];
        dist += diff * diff;
      }
      if (dist < best_dist) {  // strict: ties keep the lowest index
        best_dist = dist;
        best = k;
      }
    }
    const float* e = book.data.data() + static_cast<size_t>(best) * d;
    for (int c = 0; c < d; ++c) out.v[c * plane + j] = e[c];
  }
  return out;
}

Tensor3 VaeModel::encode(const Tensor3& in) const {
  const int f = cfg_.downsample_factor();
  if (in.h % f != 0 || in.w % f != 0)
    throw UsageError("input dimensions " + std::to_string(in.w) + "x" + std::to_string(in.h) +
                     " are not multiples of the downsampling factor " + std::to_string(f));
  Ctx ctx{*w_, cfg_, nullptr};
  Tensor3 moments = encoder_forward(in);
  if (cfg_.kind == "kl-vae") {
    moments = conv(ctx, "quant_conv", moments, 1, 0);
    // distribution mode: the mean half of the moments
    Tensor3 z(cfg_.latent_channels, moments.h, moments.w);
    std::memcpy(z.data(), moments.data(), z.size() * sizeof(float));
    return z;
  }
  Tensor3 z = conv(ctx, "quant_conv", moments, 1, 0);
  return vq_quantize(z);
}

Tensor3 VaeModel::decoder_forward(const Tensor3& sample, const Tensor3* zq) const {
  Ctx ctx{*w_, cfg_, zq};
  const int nblocks = static_cast<int>(cfg_.channel_mult.size());
  Tensor3 h = conv(ctx, "decoder.conv_in", sample);
  h = resnet_block(ctx, "decoder.mid_block.resnets.0", h, true);
  if (cfg_.mid_attention) h = attention_block(ctx, "decoder.mid_block.attentions.0", h, true);
  h = resnet_block(ctx, "decoder.mid_block.resnets.1", h, true);
  for (int b = 0; b < nblocks; ++b) {
    const std::string base = "decoder.up_blocks." + std::to_string(b);
    for (int r = 0; r < cfg_.layers_per_block + 1; ++r)
      h = resnet_block(ctx, base + ".resnets." + std::to_string(r), h, true);
    if (b + 1 < nblocks) {
      Tensor3 up(h.c, h.h * 2, h.w * 2);
      for (int c = 0; c < h.c; ++c)
        kern::upsample_nearest2x(h.plane(c), h.h, h.w, up.plane(c));
      h = conv(ctx, base + ".upsamplers.0.conv", up);
    }
  }
  norm(ctx, "decoder.conv_norm_out", h, true);
  silu(h);
  return conv(ctx, "decoder.conv_out", h);
}

Tensor3 VaeModel::decode(const Tensor3& latent) const {
  Ctx ctx{*w_, cfg_, nullptr};
  Tensor3 z = conv(ctx, "post_quant_conv", latent, 1, 0);
  // Spatial-norm decoders are conditioned on the pre-projection latent.
  return decoder_forward(z, cfg_.decoder_norm == "spatial" ? &latent : nullptr);
}

}  // namespace aerodetect
