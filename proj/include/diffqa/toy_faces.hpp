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

#include <cstdint>
#include <string>
#include <vector>

#include "diffqa/image.hpp"
#include "diffqa/rng.hpp"

namespace diffqa {

/// Shape and tone parameters of one synthetic identity, in units of the image size.
struct ToyIdentity {
  double face_rx = 0.36, face_ry = 0.42, face_cy = 0.54;
  double skin = 0.3, background = -0.7;
  double hair = -0.6, hairline = 0.28;
  double eye_y = 0.44, eye_dx = 0.17, eye_rx = 0.07, eye_ry = 0.05, eye_tone = -0.9;
  double brow_gap = 0.08, brow_thickness = 0.03, brow_tone = -0.5;
  double mouth_y = 0.73, mouth_rx = 0.14, mouth_ry = 0.035, mouth_tone = -0.6;
  double nose_tone = 0.15;
  double tint[3] = {1.0, 1.0, 1.0};
};

/// Per-sample nuisance factors. The default view is exactly left-right symmetric.
struct FaceView {
  double yaw = 0.0;        // [-1, 1]
  double gain = 1.0;
  double offset = 0.0;
  double gradient = 0.0;   // horizontal illumination slope; breaks symmetry
  double shift_y = 0.0;
  double scale = 1.0;
};

struct ToyFaceConfig {
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t identities = 16;
  std::size_t samples_per_identity = 4;
  double pose_jitter = 0.3;          // max |yaw|
  double illumination_jitter = 0.1;
  double geometry_jitter = 0.03;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ToyFace {
  Image image;
  int identity = 0;
  double yaw = 0.0;
  std::string name;
};

ToyIdentity sample_identity(Rng& rng);
FaceView sample_view(const ToyFaceConfig& cfg, Rng& rng);
Image render_face(const ToyIdentity& id, const FaceView& view, std::size_t size, std::size_t channels = 1);

/// Deterministic per seed; identity i is drawn from stream (seed, i) so growing the
/// sample count keeps earlier identities unchanged.
std::vector<ToyFace> make_toy_faces(const ToyFaceConfig& cfg);

constexpr int kSeverityLevels = 5;

/// Controlled degradation: level 0 is the input, higher levels add stronger blur and noise.
Image apply_severity(const Image& x, int level, Rng& rng);

struct ToyPair {
  std::size_t a = 0, b = 0;  // indices into the face list
  bool mated = false;
};

/// All mated pairs plus up to `max_nonmated` distinct non-mated pairs, sorted by (a, b).
std::vector<ToyPair> make_toy_pairs(const std::vector<ToyFace>& faces, std::size_t max_nonmated, std::uint64_t seed);

}  // namespace diffqa
