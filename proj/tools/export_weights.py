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

"""Exports published model weights into .abw bundles.

Needs network access (torchvision checkpoints, the `lpips` package for the
perceptual linear weights, `diffusers` for the autoencoders) and is meant to
be run once on a machine that has it:

    python3 tools/export_weights.py backbones --out weights/
    python3 tools/export_weights.py vae --model sd1 --out weights/
    python3 tools/export_weights.py vae --model sd2 --out weights/
    python3 tools/export_weights.py vae --model kd2.1 --out weights/

The bundle format is a JSON header (config + tensor index) followed by raw
little-endian float32 payloads; see src/weights.cpp for the reader.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch


def write_bundle(path, config, tensors):
    index = []
    offset = 0
    names = sorted(tensors)  # the reader indexes by name; order is free
    for name in names:
        t = tensors[name].detach().to(torch.float32).contiguous()
        index.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.numel() * 4
    header = json.dumps({"config": config, "tensors": index}).encode()
    with open(path, "wb") as f:
        f.write(b"ABWF")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for name in names:
            t = tensors[name].detach().to(torch.float32).contiguous()
            f.write(t.numpy().astype("<f4").tobytes())
    print(f"wrote {path} ({offset / 1e6:.1f} MB payload)")


# ---------------- perceptual backbones ----------------

LPIPS_CHANNELS = {
    "vgg16": [64, 128, 256, 512, 512],
    "alexnet": [64, 192, 384, 256, 256],
    "squeezenet": [64, 128, 256, 384, 384, 512, 512],
}


def export_backbones(out_dir):
    import lpips  # pip install lpips
    import torchvision

    nets = {
        "vgg16": (torchvision.models.vgg16(weights="IMAGENET1K_V1"), "vgg"),
        "alexnet": (torchvision.models.alexnet(weights="IMAGENET1K_V1"), "alex"),
        "squeezenet": (torchvision.models.squeezenet1_1(weights="IMAGENET1K_V1"), "squeeze"),
    }
    for arch, (net, lpips_name) in nets.items():
        tensors = {k: v for k, v in net.state_dict().items() if k.startswith("features.")}
        ln = lpips.LPIPS(net=lpips_name, verbose=False)
        for i, lin in enumerate(ln.lins):
            w = lin.model[-1].weight  # (1, C, 1, 1)
            assert w.shape[1] == LPIPS_CHANNELS[arch][i], (arch, i, w.shape)
            tensors[f"lin.{i}.weight"] = w
        config = {"arch": arch, "source": "torchvision IMAGENET1K_V1 + lpips v0.1"}
        if arch == "vgg16":
            alpha, beta = load_dists_weights()
            tensors["dists.alpha"] = alpha
            tensors["dists.beta"] = beta
            config["source"] += " + dists"
        write_bundle(Path(out_dir) / f"{arch}.abw", config, tensors)


def load_dists_weights():
    # The structural-texture distance ships its per-channel weights in the
    # authors' repository as weights.pt with keys alpha/beta of shape
    # (1, 1475, 1, 1). Relu'd here because the distance assumes nonnegative
    # weights.
    import urllib.request

    url = "https://github.com/dingkeyan93/DISTS/raw/master/DISTS_pytorch/weights.pt"
    path, _ = urllib.request.urlretrieve(url)
    state = torch.load(path, map_location="cpu", weights_only=True)
    alpha = torch.relu(state["alpha"].flatten())
    beta = torch.relu(state["beta"].flatten())
    assert alpha.numel() == 3 + sum(LPIPS_CHANNELS["vgg16"])
    return alpha, beta


# ---------------- autoencoders ----------------

VAE_SOURCES = {
    "sd1": ("CompVis/stable-diffusion-v1-1", "vae", "kl-vae"),
    "sd15": ("runwayml/stable-diffusion-v1-5", "vae", "kl-vae"),
    "sd2": ("stabilityai/stable-diffusion-2-base", "vae", "kl-vae"),
    "kd2.1": ("kandinsky-community/kandinsky-2-1", "movq", "vq-vae"),
}

# older diffusers checkpoints use these attention parameter names
ATTN_RENAMES = {
    ".query.": ".to_q.",
    ".key.": ".to_k.",
    ".value.": ".to_v.",
    ".proj_attn.": ".to_out.0.",
}


def export_vae(model, out_dir):
    import diffusers

    repo, subfolder, kind = VAE_SOURCES[model]
    cls = diffusers.AutoencoderKL if kind == "kl-vae" else diffusers.VQModel
    vae = cls.from_pretrained(repo, subfolder=subfolder)
    cfg = vae.config

    base = cfg.block_out_channels[0]
    config = {
        "kind": kind,
        "in_channels": cfg.in_channels,
        "base_channels": base,
        "channel_mult": [c // base for c in cfg.block_out_channels],
        "layers_per_block": cfg.layers_per_block,
        "latent_channels": cfg.latent_channels,
        "norm_groups": cfg.norm_num_groups,
        "norm_eps": 1e-6,
        "mid_attention": True,
        "decoder_norm": "spatial" if getattr(cfg, "norm_type", "group") == "spatial" else "group",
        "codebook_size": getattr(cfg, "num_vq_embeddings", 0) if kind == "vq-vae" else 0,
        "source": repo,
    }

    tensors = {}
    for k, v in vae.state_dict().items():
        if v.ndim == 0:
            continue
        for old, new in ATTN_RENAMES.items():
            if old in k:
                k = k.replace(old, new)
        # linear attention projections may be stored as (C, C, 1, 1) convs
        if any(p in k for p in (".to_q.", ".to_k.", ".to_v.", ".to_out.0.")) and v.ndim == 4:
            v = v[:, :, 0, 0]
        tensors[k] = v
    write_bundle(Path(out_dir) / f"{model}.abw", config, tensors)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    b = sub.add_parser("backbones", help="export vgg16/alexnet/squeezenet bundles")
    b.add_argument("--out", required=True)
    v = sub.add_parser("vae", help="export one autoencoder bundle")
    v.add_argument("--model", choices=sorted(VAE_SOURCES), required=True)
    v.add_argument("--out", required=True)
    args = ap.parse_args()

    Path(args.out).mkdir(parents=True, exist_ok=True)
    if args.cmd == "backbones":
        export_backbones(args.out)
    else:
        export_vae(args.model, args.out)


if __name__ == "__main__":
    sys.exit(main())
