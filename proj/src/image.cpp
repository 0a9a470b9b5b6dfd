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

#include "aerodetect/image.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <csetjmp>
extern "C" {
#include <jpeglib.h>
}

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "aerodetect/common.hpp"

namespace aerodetect {

namespace {

// Float [0,1] CHW -> interleaved RGB bytes.
std::vector<unsigned char> to_rgb8(const Tensor3& px) {
  std::vector<unsigned char> out(px.size());
  const size_t plane = px.plane_size();
  for (size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(px.v[c * plane + i], 0.0f, 1.0f);
      out[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  return out;
}

cv::Mat to_bgr8(const Tensor3& px) {
  cv::Mat m(px.h, px.w, CV_8UC3);
  const size_t plane = px.plane_size();
  for (int y = 0; y < px.h; ++y) {
    unsigned char* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < px.w; ++x) {
      const size_t i = static_cast<size_t>(y) * px.w + x;
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(px.v[c * plane + i], 0.0f, 1.0f);
        row[x * 3 + (2 - c)] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  return m;
}

Tensor3 from_bgr8(const cv::Mat& m) {
  Tensor3 px(3, m.rows, m.cols);
  const size_t plane = px.plane_size();
  for (int y = 0; y < m.rows; ++y) {
    const unsigned char* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < m.cols; ++x) {
      const size_t i = static_cast<size_t>(y) * m.cols + x;
      for (int c = 0; c < 3; ++c)
        px.v[c * plane + i] = static_cast<float>(row[x * 3 + (2 - c)]) / 255.0f;
    }
  }
  return px;
}

}  // namespace

std::string content_hash_of(const Tensor3& px) {
  const std::vector<unsigned char> rgb = to_rgb8(px);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  const uint32_t dims[2] = {static_cast<uint32_t>(px.h), static_cast<uint32_t>(px.w)};
  EVP_DigestUpdate(ctx, dims, sizeof(dims));
  EVP_DigestUpdate(ctx, rgb.data(), rgb.size());
  EVP_DigestFinal_ex(ctx, digest, &dlen);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string s;
  s.reserve(dlen * 2);
  for (unsigned int i = 0; i < dlen; ++i) {
    s.push_back(hex[digest[i] >> 4]);
    s.push_back(hex[digest[i] & 0xf]);
  }
  return s;
}

ImageTensor decode_image(const std::vector<unsigned char>& bytes, const std::string& name) {
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_COLOR);  // 8UC3 BGR, gray promoted, alpha dropped
  if (m.empty()) throw IoError("undecodable image: " + name);
  if (m.rows <= 0 || m.cols <= 0) throw IoError("zero-area image: " + name);
  ImageTensor img;
  img.px = from_bgr8(m);
  img.source_path = name;
  img.content_hash = content_hash_of(img.px);
  return img;
}

ImageTensor load_image(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IoError("zero-area image: " + path.string());
  return decode_image(bytes, path.string());
}

Tensor3 center_crop(const Tensor3& px, int ch, int cw) {
  const int y0 = (px.h - ch) / 2;
  const int x0 = (px.w - cw) / 2;
  Tensor3 out(px.c, ch, cw);
  for (int c = 0; c < px.c; ++c)
    for (int y = 0; y < ch; ++y)
      std::memcpy(&out.at(c, y, 0), &px.at(c, y0 + y, x0), sizeof(float) * cw);
  return out;
}

ImageTensor prepare_for_ae(const ImageTensor& img) {
  if (img.height() < 128 || img.width() < 128)
    throw UsageError("image too small: " + std::to_string(img.width()) + "x" +
                     std::to_string(img.height()) + " (need at least 128x128): " +
                     img.source_path);
  const int ch = img.height() / 8 * 8;
  const int cw = img.width() / 8 * 8;
  if (ch == img.height() && cw == img.width()) return img;
  ImageTensor out;
  out.px = center_crop(img.px, ch, cw);
  out.source_path = img.source_path;
  out.content_hash = content_hash_of(out.px);
  return out;
}

void save_png8(const Tensor3& px, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", to_bgr8(px), buf))
    throw IoError("png encode failed: " + path.string());
  atomic_write(path, std::string(buf.begin(), buf.end()));
}

void save_png16(const Tensor3& px, const std::filesystem::path& path) {
  cv::Mat m(px.h, px.w, CV_16UC3);
  const size_t plane = px.plane_size();
  for (int y = 0; y < px.h; ++y) {
    uint16_t* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < px.w; ++x) {
      const size_t i = static_cast<size_t>(y) * px.w + x;
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(px.v[c * plane + i], 0.0f, 1.0f);
        row[x * 3 + (2 - c)] = static_cast<uint16_t>(std::lround(v * 65535.0f));
      }
    }
  }
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", m, buf)) throw IoError("png encode failed: " + path.string());
  atomic_write(path, std::string(buf.begin(), buf.end()));
}

Tensor3 load_png16(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<char*>(bytes.data()));
  cv::Mat m = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (m.empty() || m.type() != CV_16UC3)
    throw IoError("not a 16-bit rgb png: " + path.string());
  Tensor3 px(3, m.rows, m.cols);
  const size_t plane = px.plane_size();
  for (int y = 0; y < m.rows; ++y) {
    const uint16_t* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      const size_t i = static_cast<size_t>(y) * m.cols + x;
      for (int c = 0; c < 3; ++c)
        px.v[c * plane + i] = static_cast<float>(row[x * 3 + (2 - c)]) / 65535.0f;
    }
  }
  return px;
}

void save_gray_png8(const Tensor3& map, float lo, float hi, const std::filesystem::path& path) {
  cv::Mat m(map.h, map.w, CV_8UC1);
  const float span = (hi > lo) ? (hi - lo) : 1.0f;
  for (int y = 0; y < map.h; ++y) {
    unsigned char* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < map.w; ++x) {
      const float v = std::clamp((map.at(0, y, x) - lo) / span, 0.0f, 1.0f);
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", m, buf)) throw IoError("png encode failed: " + path.string());
  atomic_write(path, std::string(buf.begin(), buf.end()));
}

std::vector<unsigned char> encode_jpeg(const Tensor3& px, int quality) {
  // libjpeg directly: the chroma subsampling must be pinned (4:2:0 below
  // quality 95, 4:4:4 above), which the imencode wrapper cannot express.
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jerr.error_exit = [](j_common_ptr ci) {
    char msg[JMSG_LENGTH_MAX];
    (*ci->err->format_message)(ci, msg);
    throw IoError(std::string("jpeg encode failed: ") + msg);
  };
  jpeg_create_compress(&cinfo);
  unsigned char* outbuf = nullptr;
  unsigned long outsize = 0;
  jpeg_mem_dest(&cinfo, &outbuf, &outsize);

  cinfo.image_width = static_cast<JDIMENSION>(px.w);
  cinfo.image_height = static_cast<JDIMENSION>(px.h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  const int chroma = quality < 95 ? 2 : 1;
  cinfo.comp_info[0].h_samp_factor = chroma;
  cinfo.comp_info[0].v_samp_factor = chroma;
  cinfo.comp_info[1].h_samp_factor = 1;
  cinfo.comp_info[1].v_samp_factor = 1;
  cinfo.comp_info[2].h_samp_factor = 1;
  cinfo.comp_info[2].v_samp_factor = 1;
  cinfo.optimize_coding = FALSE;

  const std::vector<unsigned char> rgb = to_rgb8(px);
  try {
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      const JSAMPLE* row = rgb.data() + static_cast<size_t>(cinfo.next_scanline) * px.w * 3;
      JSAMPROW rows[1] = {const_cast<JSAMPROW>(row)};
      jpeg_write_scanlines(&cinfo, rows, 1);
    }
    jpeg_finish_compress(&cinfo);
  } catch (...) {
    jpeg_destroy_compress(&cinfo);
    free(outbuf);
    throw;
  }
  std::vector<unsigned char> out(outbuf, outbuf + outsize);
  jpeg_destroy_compress(&cinfo);
  free(outbuf);
  return out;
}

void quantize_u8_grid(Tensor3& px) {
  for (float& v : px.v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    v = static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
  }
}

}  // namespace aerodetect
