// Copyright 2026 The DeepShield Authors. All Rights Reserved.
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
#include <filesystem>
#include <string>
#include <vector>

#include "deepshield/sam.hpp"

namespace deepshield {

struct SyntheticSpec {
  int real = 8;
  int fake = 8;
  int frames = 60;
  int image_size = 64;
  /// Domain tag written for the fake videos.
  std::string manipulation = "synthetic-sam";
  SamConfig sam;
};

/// A textured ellipse head with eyes, brows, nose and mouth that drifts, rotates and scales smoothly.
/// Frames are quantized to 8 bits and landmarks rounded so a disk round trip is lossless.
Video render_face_video(const std::string& video_id, int frames, int image_size, Rng& rng);

/// Real videos plus SAM-blended fakes. Fake i is rendered from the same stream as real i, so the two share
/// an identity; fakes beyond the real count get identities of their own.
/// Masks are stored with the fakes. Output order: fakes then reals, matching load_dataset's sorting.
std::vector<Video> generate_synthetic_videos(const SyntheticSpec& spec, std::uint64_t seed);

/// Writes `<root>/<video_id>/{meta.json, frames/, landmarks.txt, masks/}`.
void write_video(const Video& video, const std::filesystem::path& root);

/// Throws out_dir_exists when `out_dir` exists and `force` is false; with force it is replaced.
std::filesystem::path generate_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir,
                                                 std::uint64_t seed, bool force = false);

}  // namespace deepshield
