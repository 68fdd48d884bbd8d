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

#include "diffqa/toy_faces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "diffqa/degrade.hpp"
#include "diffqa/errors.hpp"

namespace diffqa {

void ToyFaceConfig::validate() const {
  DIFFQA_REQUIRE(image_size >= 8, "toy faces: image_size must be at least 8");
  DIFFQA_REQUIRE(channels == 1 || channels == 3, "toy faces: channels must be 1 or 3");
  DIFFQA_REQUIRE(identities >= 1, "toy faces: need at least one identity");
  DIFFQA_REQUIRE(samples_per_identity >= 2, "toy faces: each identity needs two or more samples");
  DIFFQA_REQUIRE(pose_jitter >= 0.0 && pose_jitter <= 1.0, "toy faces: pose_jitter must lie in [0, 1]");
  DIFFQA_REQUIRE(illumination_jitter >= 0.0 && illumination_jitter <= 1.0,
                 "toy faces: illumination_jitter must lie in [0, 1]");
  DIFFQA_REQUIRE(geometry_jitter >= 0.0 && geometry_jitter <= 0.2, "toy faces: geometry_jitter must lie in [0, 0.2]");
}

ToyIdentity sample_identity(Rng& rng) {
  ToyIdentity id;
  id.face_rx = rng.uniform(0.28, 0.40);
  id.face_ry = rng.uniform(0.36, 0.46);
  id.face_cy = rng.uniform(0.50, 0.56);
  id.skin = rng.uniform(-0.1, 0.7);
  id.background = rng.uniform(-0.95, -0.4);
  id.hair = rng.uniform(-1.0, 0.9);
  id.hairline = rng.uniform(0.18, 0.34);
  id.eye_y = rng.uniform(0.38, 0.48);
  id.eye_dx = rng.uniform(0.12, 0.22);
  id.eye_rx = rng.uniform(0.05, 0.10);
  id.eye_ry = rng.uniform(0.03, 0.07);
  id.eye_tone = rng.uniform(-1.0, -0.5);
  id.brow_gap = rng.uniform(0.06, 0.11);
  id.brow_thickness = rng.uniform(0.015, 0.05);
  id.brow_tone = rng.uniform(-1.0, 0.0);
  id.mouth_y = rng.uniform(0.66, 0.80);
  id.mouth_rx = rng.uniform(0.08, 0.20);
  id.mouth_ry = rng.uniform(0.025, 0.06);
  id.mouth_tone = rng.uniform(-0.9, -0.2);
  id.nose_tone = rng.uniform(-0.2, 0.3);
  for (double& t : id.tint) t = rng.uniform(0.8, 1.2);
  return id;
}

FaceView sample_view(const ToyFaceConfig& cfg, Rng& rng) {
  FaceView v;
  v.yaw = rng.uniform(-cfg.pose_jitter, cfg.pose_jitter);
  v.gain = 1.0 + rng.uniform(-cfg.illumination_jitter, cfg.illumination_jitter);
  v.offset = 0.3 * rng.uniform(-cfg.illumination_jitter, cfg.illumination_jitter);
  v.gradient = 0.6 * rng.uniform(-cfg.illumination_jitter, cfg.illumination_jitter);
  v.shift_y = rng.uniform(-cfg.geometry_jitter, cfg.geometry_jitter);
  v.scale = 1.0 + rng.uniform(-cfg.geometry_jitter, cfg.geometry_jitter);
  return v;
}

namespace {

constexpr int kSuper = 4;

inline double sq(double v) { return v * v; }

// Tone of the scene at normalized point (u, v); u is measured from the vertical axis.
// Features on both sides are evaluated through |u| so the default view is mirror-exact.
double shade(const ToyIdentity& id, const FaceView& view, double u, double v) {
  u /= view.scale;
  v = 0.5 + (v - 0.5 - view.shift_y) / view.scale;
  const double face_u = u - 0.03 * view.yaw;
  const double fu = u - 0.10 * view.yaw;
  const double side = fu < 0.0 ? -1.0 : 1.0;
  const double au = std::abs(fu);

  const bool in_face = sq(face_u / id.face_rx) + sq((v - id.face_cy) / id.face_ry) <= 1.0;
  const bool in_head = sq(face_u / (id.face_rx * 1.08)) + sq((v - id.face_cy) / (id.face_ry * 1.08)) <= 1.0;
  double tone = id.background;
  if (in_head && v < id.hairline + 0.08) tone = id.hair;
  if (in_face && v >= id.hairline) {
    tone = id.skin + 0.25 * view.yaw * face_u;
    const double dx = id.eye_dx * (1.0 + side * 0.35 * view.yaw);
    const double rx = id.eye_rx * (1.0 + side * 0.30 * view.yaw);
    if (std::abs(v - (id.eye_y - id.brow_gap)) <= id.brow_thickness && std::abs(au - dx) <= rx * 1.3) {
      tone = id.brow_tone;
    }
    if (sq((au - dx) / rx) + sq((v - id.eye_y) / id.eye_ry) <= 1.0) tone = id.eye_tone;
    const double nose_u = fu - 0.06 * view.yaw;
    if (std::abs(nose_u) <= 0.03 && v > id.eye_y + 0.04 && v < id.mouth_y - 0.06) tone = id.nose_tone + id.skin;
    const double mouth_u = fu - 0.04 * view.yaw;
    if (sq(mouth_u / id.mouth_rx) + sq((v - id.mouth_y) / id.mouth_ry) <= 1.0) tone = id.mouth_tone;
  }
  return tone;
}

}  // namespace

Image render_face(const ToyIdentity& id, const FaceView& view, std::size_t size, std::size_t channels) {
  DIFFQA_REQUIRE(size >= 8, "render_face: size must be at least 8");
  DIFFQA_REQUIRE(channels == 1 || channels == 3, "render_face: channels must be 1 or 3");
  Image img(size, size, channels);
  const double s = static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int j = 0; j < kSuper; ++j) {
        for (int i = 0; i < kSuper; ++i) {
          // Exact dyadic offsets keep mirrored sample points exactly mirrored.
          const double px = static_cast<double>(x) + (i + 0.5) / kSuper - 0.5 * s;
          const double py = static_cast<double>(y) + (j + 0.5) / kSuper;
          acc += shade(id, view, px / s, py / s);
        }
      }
      const double base = acc / (kSuper * kSuper);
      const double u = (static_cast<double>(x) + 0.5 - 0.5 * s) / s;
      const double lit = view.gain * base + view.offset + view.gradient * u;
      for (std::size_t c = 0; c < channels; ++c) {
        const double tinted = channels == 1 ? lit : lit * id.tint[c];
        img.at(y, x, c) = static_cast<float>(std::clamp(tinted, -1.0, 1.0));
      }
    }
  }
  return img;
}

std::vector<ToyFace> make_toy_faces(const ToyFaceConfig& cfg) {
  cfg.validate();
  std::vector<ToyFace> out;
  out.reserve(cfg.identities * cfg.samples_per_identity);
  for (std::size_t i = 0; i < cfg.identities; ++i) {
    Rng id_rng(derive_seed(cfg.seed, i, 0));
    const ToyIdentity id = sample_identity(id_rng);
    for (std::size_t k = 0; k < cfg.samples_per_identity; ++k) {
      Rng view_rng(derive_seed(cfg.seed, i, k + 1));
      const FaceView view = sample_view(cfg, view_rng);
      char name[48];
      std::snprintf(name, sizeof name, "id%04zu_%03zu.%s", i, k, cfg.channels == 1 ? "pgm" : "ppm");
      out.push_back(ToyFace{render_face(id, view, cfg.image_size, cfg.channels), static_cast<int>(i), view.yaw, name});
    }
  }
  return out;
}

Image apply_severity(const Image& x, int level, Rng& rng) {
  DIFFQA_REQUIRE(level >= 0 && level < kSeverityLevels, "apply_severity: level out of range");
  if (level == 0) return x;
  Image y = gaussian_blur(x, 0.3 + 0.3 * level);
  y = add_gaussian_noise(y, 10.0 * level, rng);
  clamp_canonical(y);
  return y;
}

std::vector<ToyPair> make_toy_pairs(const std::vector<ToyFace>& faces, std::size_t max_nonmated, std::uint64_t seed) {
  std::vector<ToyPair> pairs;
  std::size_t nonmated_total = 0;
  for (std::size_t a = 0; a < faces.size(); ++a) {
    for (std::size_t b = a + 1; b < faces.size(); ++b) {
      if (faces[a].identity == faces[b].identity) {
        pairs.push_back({a, b, true});
      } else {
        ++nonmated_total;
      }
    }
  }
  if (max_nonmated >= nonmated_total) {
    for (std::size_t a = 0; a < faces.size(); ++a) {
      for (std::size_t b = a + 1; b < faces.size(); ++b) {
        if (faces[a].identity != faces[b].identity) pairs.push_back({a, b, false});
      }
    }
  } else {
    Rng rng(seed);
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    const auto n = static_cast<std::int64_t>(faces.size());
    while (chosen.size() < max_nonmated) {
      auto a = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
      auto b = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
      if (a == b || faces[a].identity == faces[b].identity) continue;
      if (a > b) std::swap(a, b);
      chosen.insert({a, b});
    }
    for (const auto& [a, b] : chosen) pairs.push_back({a, b, false});
  }
  std::sort(pairs.begin(), pairs.end(), [](const ToyPair& p, const ToyPair& q) {
    return p.a != q.a ? p.a < q.a : p.b < q.b;
  });
  return pairs;
}

}  // namespace diffqa
