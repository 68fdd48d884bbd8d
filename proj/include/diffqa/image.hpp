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

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "diffqa/tensor.hpp"

namespace diffqa {

/// H x W x C image, channel-interleaved, pixels in the canonical range [-1, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f);
  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> pixels);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c = 0) { return pixels_[(y * width_ + x) * channels_ + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c = 0) const { return pixels_[(y * width_ + x) * channels_ + c]; }

  std::span<float> pixels() noexcept { return pixels_; }
  std::span<const float> pixels() const noexcept { return pixels_; }

  bool same_geometry(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0, width_ = 0, channels_ = 0;
  std::vector<float> pixels_;
};

/// Mirror columns (horizontal flip).
Image mirror(const Image& img);
void clamp_canonical(Image& img);
double mse(const Image& a, const Image& b);

/// Packs images of identical geometry into an [N, C, H, W] tensor.
TensorF to_batch(std::span<const Image> images);
TensorF to_batch(const Image& image);
/// Extracts item `n` of an [N, C, H, W] tensor.
Image from_batch(const TensorF& batch, std::size_t n);

/// 8-bit pixel to canonical value: 2 p / 255 - 1.
float pixel_to_canonical(int p);
/// Inverse mapping with round-half-up, clamped to [0, 255].
int canonical_to_pixel(float v);

/// Reads a binary PGM (P5) or PPM (P6) with maxval 255.
/// Throws ParseError with the byte offset of the first malformed field.
Image load_image(const std::filesystem::path& path);
/// Writes P5 for one channel, P6 for three.
void save_image(const std::filesystem::path& path, const Image& img);

}  // namespace diffqa
