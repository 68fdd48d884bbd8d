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


#include <gtest/gtest.h>

#include <fstream>

#include "diffqa/csv.hpp"
#include "diffqa/image.hpp"
#include "test_util.hpp"

namespace diffqa {
namespace {

Image quantized_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  Image img(h, w, c);
  for (auto& p : img.pixels()) p = pixel_to_canonical(static_cast<int>(rng.uniform_int(0, 255)));
  return img;
}

TEST(PixelMapping, Endpoints) {
  EXPECT_EQ(pixel_to_canonical(0), -1.0f);
  EXPECT_EQ(pixel_to_canonical(255), 1.0f);
  EXPECT_NEAR(pixel_to_canonical(128), 2.0 * 128 / 255 - 1, 1e-7);
  EXPECT_NEAR(pixel_to_canonical(128), 0.00392, 1e-5);
}

TEST(PixelMapping, InverseRoundsHalfUpAndClamps) {
  for (int p = 0; p <= 255; ++p) EXPECT_EQ(canonical_to_pixel(pixel_to_canonical(p)), p);
  EXPECT_EQ(canonical_to_pixel(-2.0f), 0);
  EXPECT_EQ(canonical_to_pixel(3.0f), 255);
  // 0.0 maps to 127.5, which rounds up.
  EXPECT_EQ(canonical_to_pixel(0.0f), 128);
}

TEST(ImageIo, GrayRoundTripExact) {
  const auto dir = testing::fresh_dir("image_gray");
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    const Image img = quantized_image(7 + i, 9, 1, rng);
    save_image(dir / "a.pgm", img);
    EXPECT_EQ(load_image(dir / "a.pgm"), img);
  }
}

TEST(ImageIo, ColorRoundTripExact) {
  const auto dir = testing::fresh_dir("image_color");
  Rng rng(2);
  const Image img = quantized_image(5, 6, 3, rng);
  save_image(dir / "a.ppm", img);
  EXPECT_EQ(load_image(dir / "a.ppm"), img);
}

TEST(ImageIo, HeaderCommentsAccepted) {
  const auto dir = testing::fresh_dir("image_comment");
  write_file(dir / "c.pgm", std::string("P5\n# note\n2 1\n255\n") + std::string("\x00\xff", 2));
  const Image img = load_image(dir / "c.pgm");
  EXPECT_EQ(img.width(), 2u);
  EXPECT_EQ(img.pixels()[0], -1.0f);
  EXPECT_EQ(img.pixels()[1], 1.0f);
}

TEST(ImageIo, TruncatedPayloadReportsOffset) {
  const auto dir = testing::fresh_dir("image_trunc");
  const std::string bytes = std::string("P5 4 4 255\n") + std::string(10, 'a');
  write_file(dir / "t.pgm", bytes);
  try {
    load_image(dir / "t.pgm");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), bytes.size());
  }
}

TEST(ImageIo, MalformedHeaderReportsOffset) {
  const auto dir = testing::fresh_dir("image_bad");
  write_file(dir / "m.pgm", "P5 4 x 255\n");
  try {
    load_image(dir / "m.pgm");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 5u);
  }
  write_file(dir / "p.pgm", "P2 1 1 255\n0");
  try {
    load_image(dir / "p.pgm");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 0u);
  }
  write_file(dir / "v.pgm", "P5 1 1 65535\n00");
  EXPECT_THROW(load_image(dir / "v.pgm"), ParseError);
  EXPECT_THROW(load_image(dir / "missing.pgm"), ParseError);
}

TEST(Image, MirrorReversesColumns) {
  Image img(1, 3, 2, std::vector<float>{1, 2, 3, 4, 5, 6});
  const Image m = mirror(img);
  EXPECT_EQ(m.pixels()[0], 5.0f);
  EXPECT_EQ(m.pixels()[1], 6.0f);
  EXPECT_EQ(m.pixels()[4], 1.0f);
  EXPECT_EQ(mirror(m), img);
}

TEST(Image, BatchRoundTrip) {
  Rng rng(3);
  std::vector<Image> imgs{testing::random_image(4, 3, rng), testing::random_image(4, 3, rng)};
  const TensorF b = to_batch(imgs);
  EXPECT_EQ(b.shape(), (Shape{2, 3, 4, 4}));
  EXPECT_EQ(from_batch(b, 0), imgs[0]);
  EXPECT_EQ(from_batch(b, 1), imgs[1]);
  // Channel-planar layout: element (n=1, c=2, y=3, x=1).
  EXPECT_EQ(b[((1 * 3 + 2) * 4 + 3) * 4 + 1], imgs[1].at(3, 1, 2));
  imgs.push_back(testing::random_image(5, 3, rng));
  EXPECT_THROW(to_batch(imgs), ShapeError);
}

TEST(Image, MseAndClamp) {
  Image a(2, 2, 1, 0.0f), b(2, 2, 1, std::vector<float>{1, -1, 3, 0});
  EXPECT_DOUBLE_EQ(mse(a, b), 11.0 / 4.0);
  clamp_canonical(b);
  EXPECT_EQ(b.pixels()[2], 1.0f);
  EXPECT_THROW(mse(a, Image(2, 2, 3)), ShapeError);
}

}  // namespace
}  // namespace diffqa
