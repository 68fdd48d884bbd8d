// Copyright 2026 The diffqa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "diffqa/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "diffqa/errors.hpp"

namespace diffqa {

Image::Image(std::size_t height, std::size_t width, std::size_t channels, float fill)
    : height_(height), width_(width), channels_(channels), pixels_(height * width * channels, fill) {
  DIFFQA_REQUIRE(height > 0 && width > 0 && channels > 0, "image dimensions must be positive");
}

Image::Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> pixels)
    : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
  DIFFQA_REQUIRE(height > 0 && width > 0 && channels > 0, "image dimensions must be positive");
  DIFFQA_REQUIRE(pixels_.size() == height * width * channels, "image pixel count does not match geometry");
}

Image mirror(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < img.channels(); ++c) out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
  return out;
}

void clamp_canonical(Image& img) {
  for (auto& v : img.pixels()) v = std::clamp(v, -1.0f, 1.0f);
}

double mse(const Image& a, const Image& b) {
  if (!a.same_geometry(b)) throw ShapeError("mse", "image geometries differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.pixels()[i]) - b.pixels()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

TensorF to_batch(std::span<const Image> images) {
  DIFFQA_REQUIRE(!images.empty(), "to_batch: no images");
  const Image& first = images.front();
  const std::size_t H = first.height(), W = first.width(), C = first.channels();
  TensorF out(Shape{images.size(), C, H, W});
  auto dst = out.data();
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (!images[n].same_geometry(first)) throw ShapeError("to_batch", "image " + std::to_string(n) + " geometry differs");
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) dst[((n * C + c) * H + y) * W + x] = images[n].at(y, x, c);
  }
  return out;
}

TensorF to_batch(const Image& image) { return to_batch(std::span<const Image>(&image, 1)); }

Image from_batch(const TensorF& batch, std::size_t n) {
  if (batch.rank() != 4 || n >= batch.dim(0)) throw ShapeError("from_batch", shape_str(batch.shape()));
  const std::size_t C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
  Image out(H, W, C);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(y, x, c) = batch[((n * C + c) * H + y) * W + x];
  return out;
}

float pixel_to_canonical(int p) { return 2.0f * static_cast<float>(p) / 255.0f - 1.0f; }

int canonical_to_pixel(float v) {
  const double scaled = (static_cast<double>(v) + 1.0) * 255.0 / 2.0;
  return static_cast<int>(std::clamp(std::floor(scaled + 0.5), 0.0, 255.0));
}

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& source, const std::string& bytes) : source_(source), bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > 1u << 20) throw ParseError(source_, start, std::string(what) + " too large");
      ++pos_;
    }
    if (pos_ == start) throw ParseError(source_, start, std::string("expected ") + what);
    return v;
  }

  std::size_t pos_ = 0;

 private:
  const std::string& source_;
  const std::string& bytes_;
};

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(source, 0, "cannot open file");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError(source, 0, "expected binary PGM (P5) or PPM (P6) magic");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader hr(source, bytes);
  hr.pos_ = 2;
  const std::size_t width = hr.read_uint("width");
  const std::size_t height = hr.read_uint("height");
  const std::size_t maxval_pos = hr.pos_;
  const std::size_t maxval = hr.read_uint("maxval");
  if (width == 0 || height == 0) throw ParseError(source, maxval_pos, "zero image dimension");
  if (maxval != 255) throw ParseError(source, maxval_pos, "only maxval 255 is supported");
  if (hr.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[hr.pos_]))) {
    throw ParseError(source, hr.pos_, "expected single whitespace after maxval");
  }
  const std::size_t payload = hr.pos_ + 1;
  const std::size_t need = width * height * channels;
  if (bytes.size() < payload + need) {
    throw ParseError(source, bytes.size(), "truncated payload: expected " + std::to_string(need) + " bytes");
  }
  std::vector<float> pixels(need);
  for (std::size_t i = 0; i < need; ++i) pixels[i] = pixel_to_canonical(static_cast<unsigned char>(bytes[payload + i]));
  return Image(height, width, channels, std::move(pixels));
}

void save_image(const std::filesystem::path& path, const Image& img) {
  DIFFQA_REQUIRE(img.channels() == 1 || img.channels() == 3, "save_image: only 1 or 3 channels supported");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (img.channels() == 1 ? "P5" : "P6") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  std::string payload(img.size(), '\0');
  for (std::size_t i = 0; i < img.size(); ++i) payload[i] = static_cast<char>(canonical_to_pixel(img.pixels()[i]));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace diffqa
