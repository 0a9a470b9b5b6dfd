# Copyright (c) the aerodetect authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reference-route metric values for the golden tests.

Loads the same weight bundles and fixture images the C++ tests use, runs the
published metric definitions through torch/torchvision, and prints the
values. The numbers frozen in tests/golden_values.hpp were minted with this
script; rerun it after regenerating test data with gen_testdata:

    build/tests/gen_testdata /tmp/adtest
    python3 tools/reference_metrics.py /tmp/adtest
"""

import json
import struct
import sys

import numpy as np
import torch
import torch.nn.functional as F
import torchvision


def load_bundle(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        assert magic == b"ABWF", magic
        (version,) = struct.unpack("<I", f.read(4))
        assert version == 1
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen))
        payload = f.tell()
        tensors = {}
        for t in header["tensors"]:
            f.seek(payload + t["offset"])
            n = int(np.prod(t["shape"])) if t["shape"] else 1
            data = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(t["shape"])
            tensors[t["name"]] = torch.from_numpy(data.copy())
        return header.get("config", {}), tensors


def load_png(path):
    import cv2

    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    rgb = bgr[:, :, ::-1].astype(np.float32) / 255.0
    return torch.from_numpy(rgb.copy()).permute(2, 0, 1).unsqueeze(0)


# ---------------- perceptual distance (reference semantics) ----------------

SHIFT = torch.tensor([-0.030, -0.088, -0.188]).view(1, 3, 1, 1)
SCALE = torch.tensor([0.458, 0.448, 0.450]).view(1, 3, 1, 1)


def make_backbone(arch, tensors):
    if arch == "vgg16":
        net = torchvision.models.vgg16(weights=None)
        slices = [(0, 4), (4, 9), (9, 16), (16, 23), (23, 30)]
    elif arch == "alexnet":
        net = torchvision.models.alexnet(weights=None)
        slices = [(0, 2), (2, 5), (5, 8), (8, 10), (10, 12)]
    elif arch == "squeezenet":
        net = torchvision.models.squeezenet1_1(weights=None)
        slices = [(0, 2), (2, 5), (5, 8), (8, 10), (10, 11), (11, 12), (12, 13)]
    else:
        raise ValueError(arch)
    state = {k: v for k, v in tensors.items() if k.startswith("features.")}
    missing, unexpected = net.load_state_dict(state, strict=False)
    unexpected = [k for k in unexpected]
    assert not unexpected, unexpected
    feats = net.features.eval()
    return feats, slices


def normalize_tensor(x, eps=1e-10):
    norm = torch.sqrt(torch.sum(x ** 2, dim=1, keepdim=True))
    return x / (norm + eps)


def lpips_terms(arch, tensors, a, b):
    feats, slices = make_backbone(arch, tensors)
    xa = (2 * a - 1 - SHIFT) / SCALE
    xb = (2 * b - 1 - SHIFT) / SCALE
    terms = []
    with torch.no_grad():
        for i, (lo, hi) in enumerate(slices):
            for l in range(lo, hi):
                xa = feats[l](xa)
                xb = feats[l](xb)
            lin = tensors[f"lin.{i}.weight"].view(1, -1, 1, 1)
            d = (normalize_tensor(xa) - normalize_tensor(xb)) ** 2
            term = (d * lin).sum(dim=1, keepdim=True).mean(dim=[2, 3])
            terms.append(float(term))
    return terms


class L2Pool(torch.nn.Module):
    def __init__(self):
        super().__init__()
        a = np.hanning(5)[1:-1]
        g = torch.tensor(np.outer(a, a) / np.outer(a, a).sum(), dtype=torch.float32)
        self.register_buffer("g", g.view(1, 1, 3, 3))

    def forward(self, x):
        c = x.shape[1]
        out = F.conv2d(x ** 2, self.g.repeat(c, 1, 1, 1), stride=2, padding=1, groups=c)
        return torch.sqrt(out + 1e-12)


def dists_value(tensors, a, b):
    feats, _ = make_backbone("vgg16", tensors)
    mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
    std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
    pool = L2Pool()
    stage_ranges = [(0, 4), (5, 9), (10, 16), (17, 23), (24, 30)]

    def stages(x):
        out = [x]
        h = (x - mean) / std
        with torch.no_grad():
            for si, (lo, hi) in enumerate(stage_ranges):
                if si > 0:
                    h = pool(h)
                for l in range(lo, hi):
                    h = feats[l](h)
                out.append(h)
        return out

    fa, fb = stages(a), stages(b)
    alpha = tensors["dists.alpha"]
    beta = tensors["dists.beta"]
    wsum = alpha.sum() + beta.sum()
    c1 = c2 = 1e-6
    off = 0
    dist = 0.0
    for x, y in zip(fa, fb):
        ch = x.shape[1]
        al = alpha[off:off + ch] / wsum
        be = beta[off:off + ch] / wsum
        mx = x.mean([2, 3])
        my = y.mean([2, 3])
        vx = ((x - mx.unsqueeze(-1).unsqueeze(-1)) ** 2).mean([2, 3])
        vy = ((y - my.unsqueeze(-1).unsqueeze(-1)) ** 2).mean([2, 3])
        cov = (x * y).mean([2, 3]) - mx * my
        s1 = (2 * mx * my + c1) / (mx ** 2 + my ** 2 + c1)
        s2 = (2 * cov + c2) / (vx + vy + c2)
        dist += float((al * s1[0]).sum() + (be * s2[0]).sum())
        off += ch
    assert off == alpha.numel()
    return 1.0 - dist


# ---------------- pixel-space metrics (pinned conventions) ----------------


def gauss_kernel(radius=5, sigma=1.5):
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * t * t / sigma ** 2)
    g /= g.sum()
    return torch.tensor(np.outer(g, g), dtype=torch.float64)


def blur_replicate(x, k):
    c = x.shape[1]
    r = (k.shape[-1] - 1) // 2
    xp = F.pad(x, (r, r, r, r), mode="replicate")
    return F.conv2d(xp, k.view(1, 1, *k.shape).repeat(c, 1, 1, 1), groups=c)


def ssim_stats(a, b):
    k = gauss_kernel()
    a = a.double()
    b = b.double()
    mua = blur_replicate(a, k)
    mub = blur_replicate(b, k)
    saa = blur_replicate(a * a, k) - mua ** 2
    sbb = blur_replicate(b * b, k) - mub ** 2
    sab = blur_replicate(a * b, k) - mua * mub
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    full = ((2 * mua * mub + c1) * (2 * sab + c2)) / ((mua ** 2 + mub ** 2 + c1) * (saa + sbb + c2))
    cs = (2 * sab + c2) / (saa + sbb + c2)
    return float(full.mean()), float(cs.mean())


def msssim_value(a, b):
    weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]
    prod = 1.0
    xa, xb = a, b
    for s in range(5):
        if s < 4:
            _, cs = ssim_stats(xa, xb)
            prod *= max(cs, 0.0) ** weights[s]
            xa = F.avg_pool2d(xa, 2)
            xb = F.avg_pool2d(xb, 2)
        else:
            full, _ = ssim_stats(xa, xb)
            prod *= max(full, 0.0) ** weights[s]
    return 1.0 - prod


# ---------------- autoencoder graph reference ----------------


def vae_reference(config, tensors, x):
    cfg = dict(config)
    groups = cfg["norm_groups"]
    eps = cfg["norm_eps"]
    mult = cfg["channel_mult"]
    layers = cfg["layers_per_block"]
    n = len(mult)
    vq = cfg["kind"] == "vq-vae"
    spatial = cfg.get("decoder_norm", "group") == "spatial"
    z_ch = cfg["latent_channels"]

    def conv(name, h, stride=1, pad=1, pad_rb=None):
        w = tensors[name + ".weight"]
        b = tensors[name + ".bias"]
        if pad_rb is not None:
            h = F.pad(h, (pad, pad_rb, pad, pad_rb))
            return F.conv2d(h, w, b, stride=stride)
        return F.conv2d(h, w, b, stride=stride, padding=pad)

    def gnorm(name, h, zq=None):
        if spatial and zq is not None and (name + ".norm_layer.weight") in tensors:
            g = F.group_norm(h, groups, tensors[name + ".norm_layer.weight"],
                             tensors[name + ".norm_layer.bias"], eps)
            zqr = F.interpolate(zq, size=h.shape[-2:], mode="nearest")
            return g * conv(name + ".conv_y", zqr, pad=0) + conv(name + ".conv_b", zqr, pad=0)
        return F.group_norm(h, groups, tensors[name + ".weight"], tensors[name + ".bias"], eps)

    def resnet(base, h, zq=None):
        r = gnorm(base + ".norm1", h, zq)
        r = F.silu(r)
        r = conv(base + ".conv1", r)
        r = gnorm(base + ".norm2", r, zq)
        r = F.silu(r)
        r = conv(base + ".conv2", r)
        skip = h
        if (base + ".conv_shortcut.weight") in tensors:
            skip = conv(base + ".conv_shortcut", h, pad=0)
        return skip + r

    def attention(base, h, zq=None):
        c = h.shape[1]
        if spatial and zq is not None and (base + ".spatial_norm.norm_layer.weight") in tensors:
            g = gnorm(base + ".spatial_norm", h, zq)
        else:
            g = F.group_norm(h, groups, tensors[base + ".group_norm.weight"],
                             tensors[base + ".group_norm.bias"], eps)
        hw = g.shape[2] * g.shape[3]
        tok = g.flatten(2).transpose(1, 2)  # (1, hw, c)

        def lin(name, t):
            return t @ tensors[name + ".weight"].t() + tensors[name + ".bias"]

        q = lin(base + ".to_q", tok)
        k = lin(base + ".to_k", tok)
        v = lin(base + ".to_v", tok)
        scores = torch.softmax(q @ k.transpose(1, 2) / c ** 0.5, dim=-1)
        out = lin(base + ".to_out.0", scores @ v)
        return h + out.transpose(1, 2).reshape(h.shape)

    with torch.no_grad():
        # encoder
        h = conv("encoder.conv_in", x)
        for b in range(n):
            base = f"encoder.down_blocks.{b}"
            for r in range(layers):
                h = resnet(f"{base}.resnets.{r}", h)
            if b + 1 < n:
                h = conv(f"{base}.downsamplers.0.conv", h, stride=2, pad=0, pad_rb=1)
        h = resnet("encoder.mid_block.resnets.0", h)
        if cfg["mid_attention"]:
            h = attention("encoder.mid_block.attentions.0", h)
        h = resnet("encoder.mid_block.resnets.1", h)
        h = gnorm("encoder.conv_norm_out", h)
        h = F.silu(h)
        h = conv("encoder.conv_out", h)
        h = conv("quant_conv", h, pad=0)
        if vq:
            book = tensors["quantize.embedding.weight"]  # (n, d)
            flat = h.flatten(2)[0].t()  # (hw, d)
            d2 = (flat ** 2).sum(1, keepdim=True) - 2 * flat @ book.t() + (book ** 2).sum(1)
            idx = d2.argmin(1)
            latent = book[idx].t().reshape(1, z_ch, h.shape[2], h.shape[3])
        else:
            latent = h[:, :z_ch]

        # decoder
        zq = latent if spatial else None
        g = conv("post_quant_conv", latent, pad=0)
        g = conv("decoder.conv_in", g)
        g = resnet("decoder.mid_block.resnets.0", g, zq)
        if cfg["mid_attention"]:
            g = attention("decoder.mid_block.attentions.0", g, zq)
        g = resnet("decoder.mid_block.resnets.1", g, zq)
        rev = list(reversed([cfg["base_channels"] * m for m in mult]))
        for b in range(n):
            base = f"decoder.up_blocks.{b}"
            for r in range(layers + 1):
                g = resnet(f"{base}.resnets.{r}", g, zq)
            if b + 1 < n:
                g = F.interpolate(g, scale_factor=2, mode="nearest")
                g = conv(f"{base}.upsamplers.0.conv", g)
        g = gnorm("decoder.conv_norm_out", g, zq)
        g = F.silu(g)
        g = conv("decoder.conv_out", g)
    return latent, g


def stats(t):
    t = t.double()
    return {
        "sum": float(t.sum()),
        "sumsq": float((t * t).sum()),
        "min": float(t.min()),
        "max": float(t.max()),
    }


def main():
    root = sys.argv[1]
    torch.set_num_threads(4)
    a64 = load_png(f"{root}/fixtures/a64.png")
    b64 = load_png(f"{root}/fixtures/b64.png")
    a176 = load_png(f"{root}/fixtures/a176.png")
    b176 = load_png(f"{root}/fixtures/b176.png")

    out = {}
    for arch in ["vgg16", "alexnet", "squeezenet"]:
        _, tensors = load_bundle(f"{root}/weights/{arch}.abw")
        terms = lpips_terms(arch, tensors, a64, b64)
        out[f"lpips-{arch}"] = {"terms": terms, "total": float(sum(terms))}
        if arch == "vgg16":
            out["dists"] = dists_value(tensors, a64, b64)

    mse = float(((a64.double() - b64.double()) ** 2).mean())
    ssim_full, _ = ssim_stats(a64, b64)
    out["mse"] = mse
    out["ssim"] = 1.0 - ssim_full
    out["ms-ssim"] = msssim_value(a176, b176)

    for name in ["kl-tiny", "vq-tiny"]:
        config, tensors = load_bundle(f"{root}/{name}.abw")
        x = 2 * a64 - 1
        latent, recon = vae_reference(config, tensors, x)
        out[f"vae-{name}"] = {"latent": stats(latent), "recon": stats(recon)}

    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
