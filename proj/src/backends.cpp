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

#include "aerodetect/backends.hpp"

#include <cmath>
#include <cstring>
#include <json.hpp>

#include "aerodetect/common.hpp"
#include "aerodetect/kernels.hpp"
#include "aerodetect/vae.hpp"

namespace aerodetect {

using nlohmann::json;

void AEBackend::check_aligned(const Tensor3& img) const {
  if (img.c != 3) throw UsageError("backend input must have 3 channels");
  if (img.h % downsample_factor_ != 0 || img.w % downsample_factor_ != 0)
    throw UsageError("backend '" + ae_id_ + "' requires dimensions divisible by " +
                     std::to_string(downsample_factor_) + ", got " + std::to_string(img.w) + "x" +
                     std::to_string(img.h));
}

ImageTensor AEBackend::reconstruct(const ImageTensor& img) const {
  check_aligned(img.px);
  Tensor3 latent = encode(img.px);
  Tensor3 out = decode(latent);
  if (out.h != img.px.h || out.w != img.px.w || out.c != 3)
    throw IoError("backend '" + ae_id_ + "' broke dimension preservation");
  kern::quantize_u16_grid(out.data(), out.size());
  ImageTensor rec;
  rec.px = std::move(out);
  rec.source_path = img.source_path;
  rec.content_hash = content_hash_of(rec.px);
  return rec;
}

namespace {

// Lossless 8x8 space-to-depth; the stub latent representation.
Tensor3 space_to_depth8(const Tensor3& img) {
  const int f = 8;
  Tensor3 z(img.c * f * f, img.h / f, img.w / f);
  for (int c = 0; c < img.c; ++c)
    for (int dy = 0; dy < f; ++dy)
      for (int dx = 0; dx < f; ++dx) {
        const int zc = (c * f + dy) * f + dx;
        for (int y = 0; y < z.h; ++y)
          for (int x = 0; x < z.w; ++x) z.at(zc, y, x) = img.at(c, y * f + dy, x * f + dx);
      }
  return z;
}

Tensor3 depth_to_space8(const Tensor3& z) {
  const int f = 8;
  Tensor3 img(z.c / (f * f), z.h * f, z.w * f);
  for (int c = 0; c < img.c; ++c)
    for (int dy = 0; dy < f; ++dy)
      for (int dx = 0; dx < f; ++dx) {
        const int zc = (c * f + dy) * f + dx;
        for (int y = 0; y < z.h; ++y)
          for (int x = 0; x < z.w; ++x) img.at(c, y * f + dy, x * f + dx) = z.at(zc, y, x);
      }
  return img;
}

class IdentityStub final : public AEBackend {
 public:
  IdentityStub() : AEBackend("stub-identity", "stub", "identity", 8) {}
  Tensor3 encode(const Tensor3& img) const override {
    check_aligned(img);
    return space_to_depth8(img);
  }
  Tensor3 decode(const Tensor3& latent) const override { return depth_to_space8(latent); }
};

// 5x5 box blur with replicated edges as E∘D.
Tensor3 box_blur5(const Tensor3& img) {
  static const float taps[5] = {0.2f, 0.2f, 0.2f, 0.2f, 0.2f};
  Tensor3 out(img.c, img.h, img.w);
  std::vector<float> tmp(img.plane_size());
  for (int c = 0; c < img.c; ++c) {
    kern::active().sep_conv_h(img.plane(c), tmp.data(), img.h, img.w, taps, 2);
    kern::active().sep_conv_v(tmp.data(), out.plane(c), img.h, img.w, taps, 2);
  }
  return out;
}

class BlurStub final : public AEBackend {
 public:
  BlurStub() : AEBackend("stub-blur", "stub", "blur", 8) {}
  Tensor3 encode(const Tensor3& img) const override {
    check_aligned(img);
    return space_to_depth8(box_blur5(img));
  }
  Tensor3 decode(const Tensor3& latent) const override { return depth_to_space8(latent); }
};

class VaeBackend final : public AEBackend {
 public:
  VaeBackend(const BackendDescriptor& d, std::shared_ptr<const WeightBundle> bundle,
             VaeConfig cfg)
      : AEBackend(d.ae_id, d.kind, d.weights_source, cfg.downsample_factor()),
        model_(std::move(cfg), std::move(bundle)) {}

  Tensor3 encode(const Tensor3& img) const override {
    check_aligned(img);
    Tensor3 in = img;  // module contract is [0,1]; the model runs in [-1,1]
    kern::active().scale_add(in.data(), in.size(), 2.0f, -1.0f);
    return model_.encode(in);
  }

  Tensor3 decode(const Tensor3& latent) const override {
    Tensor3 out = model_.decode(latent);
    kern::active().scale_add(out.data(), out.size(), 0.5f, 0.5f);
    return out;
  }

 private:
  VaeModel model_;
};

std::shared_ptr<AEBackend> instantiate(const BackendDescriptor& d) {
  if (d.kind == "stub") {
    if (d.weights_source == "identity") return std::make_shared<IdentityStub>();
    if (d.weights_source == "blur") return std::make_shared<BlurStub>();
    throw UsageError("unknown stub variant '" + d.weights_source + "'");
  }
  if (d.kind != "kl-vae" && d.kind != "vq-vae")
    throw UsageError("unknown backend kind '" + d.kind + "' for '" + d.ae_id + "'");
  const std::filesystem::path p(d.weights_source);
  if (!std::filesystem::exists(p))
    throw IoError("weights unavailable for backend '" + d.ae_id + "': " + d.weights_source +
                  " (export with tools/export_weights.py)");
  auto bundle = std::make_shared<WeightBundle>(WeightBundle::load(p));
  VaeConfig cfg = VaeConfig::from_json(bundle->config);
  if (cfg.kind != d.kind)
    throw IoError("backend '" + d.ae_id + "' descriptor kind '" + d.kind +
                  "' does not match bundle kind '" + cfg.kind + "'");
  if (cfg.downsample_factor() != d.downsample_factor)
    throw IoError("backend '" + d.ae_id + "' declares factor " +
                  std::to_string(d.downsample_factor) + " but bundle has " +
                  std::to_string(cfg.downsample_factor()));
  return std::make_shared<VaeBackend>(d, std::move(bundle), std::move(cfg));
}

}  // namespace

BackendDescriptor load_backend_descriptor(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw UsageError("malformed backend descriptor " + path.string() + ": " + e.what());
  }
  BackendDescriptor d;
  d.ae_id = j.at("ae_id").get<std::string>();
  d.kind = j.at("kind").get<std::string>();
  d.weights_source = j.at("weights_source").get<std::string>();
  d.downsample_factor = j.value("downsample_factor", 8);
  return d;
}

std::filesystem::path ReconCache::path_for(const std::string& ae_id,
                                           const std::string& content_hash) const {
  return root_ / "recon" / ae_id / (content_hash + ".png");
}

std::optional<Tensor3> ReconCache::lookup(const std::string& ae_id,
                                          const std::string& content_hash, int expect_h,
                                          int expect_w) const {
  if (!enabled()) return std::nullopt;
  const auto p = path_for(ae_id, content_hash);
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    Tensor3 px = load_png16(p);
    if (px.h != expect_h || px.w != expect_w)
      throw IoError("cached reconstruction has wrong dimensions");
    return px;
  } catch (const std::exception& e) {
    AD_WARN("corrupt cache entry %s (%s); recomputing", p.string().c_str(), e.what());
    return std::nullopt;
  }
}

void ReconCache::store(const std::string& ae_id, const std::string& content_hash,
                       const Tensor3& px) const {
  if (!enabled()) return;
  save_png16(px, path_for(ae_id, content_hash));
}

ImageTensor reconstruct_cached(const AEBackend& backend, const ImageTensor& img,
                               const ReconCache& cache) {
  if (auto hit = cache.lookup(backend.ae_id(), img.content_hash, img.px.h, img.px.w)) {
    ImageTensor rec;
    rec.px = std::move(*hit);
    rec.source_path = img.source_path;
    rec.content_hash = content_hash_of(rec.px);
    return rec;
  }
  ImageTensor rec = backend.reconstruct(img);
  cache.store(backend.ae_id(), img.content_hash, rec.px);
  return rec;
}

BackendRegistry BackendRegistry::with_builtins(const std::filesystem::path& weights_dir) {
  BackendRegistry r;
  r.register_backend({"stub-identity", "stub", "identity", 8});
  r.register_backend({"stub-blur", "stub", "blur", 8});
  for (const char* id : {"sd1", "sd15", "sd2"})
    r.register_backend({id, "kl-vae", (weights_dir / (std::string(id) + ".abw")).string(), 8});
  r.register_backend({"kd2.1", "vq-vae", (weights_dir / "kd2.1.abw").string(), 8});
  return r;
}

void BackendRegistry::register_backend(const BackendDescriptor& d) {
  std::lock_guard<std::mutex> lock(*mu_);
  if (descriptors_.count(d.ae_id))
    throw UsageError("duplicate backend id '" + d.ae_id + "'");
  descriptors_.emplace(d.ae_id, d);
}

bool BackendRegistry::has(const std::string& ae_id) const {
  std::lock_guard<std::mutex> lock(*mu_);
  return descriptors_.count(ae_id) != 0;
}

std::shared_ptr<AEBackend> BackendRegistry::get(const std::string& ae_id) const {
  std::lock_guard<std::mutex> lock(*mu_);
  auto inst = instances_.find(ae_id);
  if (inst != instances_.end()) return inst->second;
  auto it = descriptors_.find(ae_id);
  if (it == descriptors_.end()) {
    std::string known;
    for (const auto& [id, _] : descriptors_) known += (known.empty() ? "" : ", ") + id;
    throw UsageError("unknown backend '" + ae_id + "' (registered: " + known + ")");
  }
  auto backend = instantiate(it->second);
  instances_.emplace(ae_id, backend);
  return backend;
}

std::vector<std::string> BackendRegistry::ids() const {
  std::lock_guard<std::mutex> lock(*mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : descriptors_) out.push_back(id);
  return out;
}

}  // namespace aerodetect
