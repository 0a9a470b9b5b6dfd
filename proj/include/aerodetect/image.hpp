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

#include <filesystem>
#include <string>
#include <vector>

#include "aerodetect/tensor.hpp"

namespace aerodetect {

// Decoded RGB raster, float values in [0,1], 3 channels (CHW). content_hash
// is a digest of the decoded 8-bit pixels, so the same image stored as PNG
// and lossless WebP hashes identically.
struct ImageTensor {
  Tensor3 px;  // (3, h, w)
  std::string source_path;
  std::string content_hash;

  int height() const { return px.h; }
  int width() const { return px.w; }
};

// Hex SHA-256 over dims + RGB8 bytes of the quantized raster.
std::string content_hash_of(const Tensor3& px);

// Decode PNG/JPEG/WebP to a 3-channel float image. Grayscale is promoted,
// alpha dropped. Throws IoError on undecodable or zero-area input.
ImageTensor load_image(const std::filesystem::path& path);

// Decode from an in-memory encoded buffer (same conventions as load_image).
ImageTensor decode_image(const std::vector<unsigned char>& bytes, const std::string& name);

// Center-crop each dimension down to the largest multiple of 8; never
// resamples. Throws if either side is below 128 pixels.
ImageTensor prepare_for_ae(const ImageTensor& img);

// Center crop to exactly (ch, cw).
Tensor3 center_crop(const Tensor3& px, int ch, int cw);

// 8-bit PNG write (display artifacts); 16-bit PNG round-trip (caches).
void save_png8(const Tensor3& px, const std::filesystem::path& path);
void save_png16(const Tensor3& px, const std::filesystem::path& path);
// Loads a 16-bit PNG back to floats on the 1/65535 grid. Throws on failure.
Tensor3 load_png16(const std::filesystem::path& path);

// Single-channel 8-bit grayscale PNG from an affine rescale of `map` using
// the given (lo, hi) display range.
void save_gray_png8(const Tensor3& map, float lo, float hi, const std::filesystem::path& path);

// JPEG encode at the given quality; 4:2:0 chroma below quality 95, else
// 4:4:4. The byte size doubles as the complexity proxy.
std::vector<unsigned char> encode_jpeg(const Tensor3& px, int quality);

// Round to the 8-bit grid and back; loaders already return values on it.
void quantize_u8_grid(Tensor3& px);

}  // namespace aerodetect
