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

#include <doctest.h>

#include <cstddef>
#include <cstdio>
extern "C" {
#include <jpeglib.h>
}

#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "aerodetect/common.hpp"
#include "aerodetect/image.hpp"
#include "aerodetect/rng.hpp"
#include "testutil.hpp"

using namespace aerodetect;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const std::string& name) { return testutil::scratch_dir() / name; }

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Independent JPEG decode via libjpeg, bypassing the loader under test.
std::vector<unsigned char> libjpeg_decode_rgb(const std::vector<unsigned char>& bytes, int* h,
                                              int* w) {
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  *h = static_cast<int>(cinfo.output_height);
  *w = static_cast<int>(cinfo.output_width);
  std::vector<unsigned char> rgb(static_cast<size_t>(*h) * *w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = rgb.data() + static_cast<size_t>(cinfo.output_scanline) * *w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return rgb;
}

}  // namespace

TEST_CASE("png load: dimensions, range, exact endpoints") {
  const Tensor3 tex = testutil::texture(48, 64, 1);
  const auto path = tmp_file("t48.png");
  save_png8(tex, path);
  const ImageTensor img = load_image(path);
  CHECK(img.px.c == 3);
  CHECK(img.height() == 48);
  CHECK(img.width() == 64);
  float lo = 1.0f, hi = 0.0f;
  for (float v : img.px.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0f);
  CHECK(hi <= 1.0f);
  // loader reproduces the quantized raster exactly
  CHECK(img.px.v == tex.v);

  // 8-bit endpoints map to exact floats
  Tensor3 extremes(3, 2, 2, 0.0f);
  extremes.at(0, 0, 0) = 1.0f;
  const auto epath = tmp_file("extremes.png");
  save_png8(extremes, epath);
  const ImageTensor ex = load_image(epath);
  CHECK(ex.px.at(0, 0, 0) == 1.0f);
  CHECK(ex.px.at(1, 0, 0) == 0.0f);
}

TEST_CASE("jpeg load agrees with an independent reference decode") {
  const Tensor3 tex = testutil::texture(480, 640, 2);
  const auto bytes = encode_jpeg(tex, 80);
  const auto path = tmp_file("t640.jpg");
  write_bytes(path, bytes);

  const ImageTensor img = load_image(path);
  CHECK(img.height() == 480);
  CHECK(img.width() == 640);

  int rh = 0, rw = 0;
  const auto rgb = libjpeg_decode_rgb(bytes, &rh, &rw);
  REQUIRE(rh == 480);
  REQUIRE(rw == 640);
  size_t mismatches = 0;
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x)
      for (int c = 0; c < 3; ++c) {
        const float ref = static_cast<float>(rgb[(static_cast<size_t>(y) * rw + x) * 3 + c]) / 255.0f;
        if (std::abs(img.px.at(c, y, x) - ref) > 1.5f / 255.0f) ++mismatches;
      }
  // identical codec underneath, so differences should be essentially nil
  CHECK(mismatches == 0);
}

TEST_CASE("grayscale is promoted and alpha dropped") {
  cv::Mat gray(20, 30, CV_8UC1, cv::Scalar(77));
  std::vector<unsigned char> buf;
  cv::imencode(".png", gray, buf);
  const auto gpath = tmp_file("gray.png");
  write_bytes(gpath, buf);
  const ImageTensor g = load_image(gpath);
  CHECK(g.px.c == 3);
  CHECK(g.px.at(0, 3, 3) == doctest::Approx(77.0f / 255.0f));
  CHECK(g.px.at(2, 3, 3) == g.px.at(0, 3, 3));

  cv::Mat rgba(8, 8, CV_8UC4, cv::Scalar(10, 20, 30, 128));
  cv::imencode(".png", rgba, buf);
  const auto apath = tmp_file("alpha.png");
  write_bytes(apath, buf);
  const ImageTensor a = load_image(apath);
  CHECK(a.px.c == 3);
}

TEST_CASE("load errors: missing, undecodable, empty") {
  CHECK_THROWS_AS(load_image(tmp_file("does-not-exist.png")), IoError);
  const auto bad = tmp_file("bad.png");
  write_bytes(bad, {1, 2, 3, 4, 5});
  CHECK_THROWS_AS(load_image(bad), IoError);
  const auto empty = tmp_file("empty.png");
  write_bytes(empty, {});
  CHECK_THROWS_AS(load_image(empty), IoError);
}

TEST_CASE("content hash: determinism and codec independence") {
  const Tensor3 tex = testutil::texture(40, 40, 3);
  const auto p1 = tmp_file("hash1.png");
  save_png8(tex, p1);
  const ImageTensor a = load_image(p1);
  const ImageTensor b = load_image(p1);
  CHECK(a.content_hash == b.content_hash);
  CHECK(a.content_hash.size() == 64);

  // same pixels through lossless webp hash identically
  cv::Mat bgr(40, 40, CV_8UC3);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c)
        bgr.at<cv::Vec3b>(y, x)[2 - c] =
            static_cast<unsigned char>(std::lround(tex.at(c, y, x) * 255.0f));
  std::vector<unsigned char> buf;
  cv::imencode(".webp", bgr, buf, {cv::IMWRITE_WEBP_QUALITY, 101});  // >100 = lossless
  const auto wpath = tmp_file("hash1.webp");
  write_bytes(wpath, buf);
  const ImageTensor w = load_image(wpath);
  CHECK(w.content_hash == a.content_hash);
}

TEST_CASE("prepare_for_ae crops to multiples of 8 without resampling") {
  ImageTensor img = testutil::texture_image(512, 512, 4);
  const ImageTensor same = prepare_for_ae(img);
  CHECK(same.height() == 512);
  CHECK(same.width() == 512);
  CHECK(same.px.v == img.px.v);

  ImageTensor odd = testutil::texture_image(517, 515, 5);
  const ImageTensor cropped = prepare_for_ae(odd);
  CHECK(cropped.height() == 512);
  CHECK(cropped.width() == 512);
  // center crop, top-left offset (2,1)
  CHECK(cropped.px.at(0, 0, 0) == odd.px.at(0, 2, 1));
  CHECK(cropped.px.at(2, 511, 511) == odd.px.at(2, 2 + 511, 1 + 511));

  ImageTensor mj = testutil::texture_image(1024, 1024, 6);
  const ImageTensor kept = prepare_for_ae(mj);
  CHECK(kept.height() == 1024);
  CHECK(kept.width() == 1024);
  CHECK(kept.px.v == mj.px.v);
}

TEST_CASE("prepare_for_ae is idempotent and rejects small images") {
  Rng rng(88);
  for (int i = 0; i < 10; ++i) {
    const int h = rng.uniform_int(128, 400);
    const int w = rng.uniform_int(128, 400);
    ImageTensor img = testutil::texture_image(h, w, 1000 + i);
    const ImageTensor once = prepare_for_ae(img);
    const ImageTensor twice = prepare_for_ae(once);
    CHECK(once.px.v == twice.px.v);
    CHECK(once.content_hash == twice.content_hash);
    CHECK(once.height() % 8 == 0);
    CHECK(once.width() % 8 == 0);
  }
  ImageTensor small = testutil::texture_image(127, 256, 9);
  CHECK_THROWS_WITH_AS(prepare_for_ae(small), doctest::Contains("image too small"), UsageError);
}

TEST_CASE("16-bit png cache round-trip is bit-exact") {
  Rng rng(123);
  Tensor3 t(3, 33, 21);
  for (float& v : t.v) v = static_cast<float>(rng.uniform());
  // snap to the u16 grid the way backends do
  for (float& v : t.v) v = std::round(v * 65535.0f) / 65535.0f;
  const auto path = tmp_file("cache16.png");
  save_png16(t, path);
  const Tensor3 back = load_png16(path);
  CHECK(back.v == t.v);
  CHECK(back.h == t.h);
  CHECK(back.w == t.w);
}

TEST_CASE("jpeg encoder pins quality-dependent chroma subsampling") {
  const Tensor3 tex = testutil::texture(64, 64, 11);
  auto find_sampling = [](const std::vector<unsigned char>& b) {
    // walk markers; SOF0/SOF2 carry per-component sampling factors at
    // marker + 11 (len 2, precision 1, h 2, w 2, ncomp 1, comp id 1)
    size_t i = 2;  // skip SOI
    while (i + 3 < b.size()) {
      if (b[i] != 0xFF) return -2;
      const unsigned char m = b[i + 1];
      if (m == 0xC0 || m == 0xC2) return static_cast<int>(b[i + 11]);
      if (m == 0xDA) break;  // entropy-coded data follows
      const size_t len = (static_cast<size_t>(b[i + 2]) << 8) | b[i + 3];
      i += 2 + len;
    }
    return -1;
  };
  const auto q50 = encode_jpeg(tex, 50);
  const auto q95 = encode_jpeg(tex, 95);
  CHECK(find_sampling(q50) == 0x22);  // 4:2:0
  CHECK(find_sampling(q95) == 0x11);  // 4:4:4
  CHECK(encode_jpeg(tex, 50) == q50);  // deterministic bytes
  CHECK(q50.size() < encode_jpeg(tex, 90).size());
}
