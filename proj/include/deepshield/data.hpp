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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepshield/common.hpp"
#include "deepshield/image.hpp"

namespace deepshield {

/// Facial landmarks of one frame, in pixel units.
struct LandmarkSet {
  std::vector<Eigen::Vector2f> points;
};

/// T consecutive frames of one video.
struct VideoClip {
  std::vector<Frame> frames;
  std::string source_id;
  int start_index = 0;

  int length() const { return static_cast<int>(frames.size()); }
};

/// Per-frame soft manipulation mask in [0, 1].
using BlendMask = std::vector<ImagePlane>;

BlendMask zero_mask(int frames, int height, int width);
bool mask_is_zero(const BlendMask& mask);

struct FaceBox {
  float x = 0, y = 0, width = 0, height = 0;
};

struct VideoRecord {
  std::string video_id;
  Label label = Label::Real;
  /// Manipulation type of fakes (e.g. "Deepfakes", "FaceSwap"); "real" for pristine videos.
  std::string domain_tag;
  std::vector<std::filesystem::path> frame_paths;
  std::optional<std::filesystem::path> landmark_path;
  std::vector<std::filesystem::path> mask_paths;
  std::vector<FaceBox> face_boxes;

  int frame_count() const { return static_cast<int>(frame_paths.size()); }
};

inline constexpr int kInferenceSegments = 4;
inline constexpr int kDefaultClipLength = 12;
inline constexpr int kMinVideoFrames = kInferenceSegments * kDefaultClipLength;

struct DatasetOptions {
  int min_frames = kMinVideoFrames;
};

/// Reads `<root>/<video_id>/{meta.json,frames/,landmarks file}` into validated records sorted by id.
std::vector<VideoRecord> load_dataset(const std::filesystem::path& root, const DatasetOptions& options = {});

/// Parses a landmark file: one line per frame of whitespace-separated `x y` pairs.
std::vector<LandmarkSet> read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, const std::vector<LandmarkSet>& landmarks);

/// A record with decoded pixels, landmarks, and (when stored) masks.
struct Video {
  VideoRecord record;
  std::vector<Frame> frames;
  std::vector<LandmarkSet> landmarks;
  BlendMask masks;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

/// Decodes all frames, resized to `image_size` if needed; landmarks are rescaled to match.
Video load_video(const VideoRecord& record, int image_size);

std::vector<int> training_clip_starts(int frame_count, int num_clips, int clip_len, Rng& rng);
/// Four contiguous segments (remainder in the last); each clip is a segment's first clip_len frames.
std::vector<int> inference_clip_starts(int frame_count, int clip_len = kDefaultClipLength);

VideoClip extract_clip(const Video& video, int start, int clip_len);
std::vector<LandmarkSet> extract_landmarks(const Video& video, int start, int clip_len);
BlendMask extract_mask(const Video& video, int start, int clip_len);

std::vector<VideoClip> sample_training_clips(const Video& video, int num_clips, int clip_len, Rng& rng);
std::vector<VideoClip> sample_inference_clips(const Video& video, int clip_len = kDefaultClipLength);

}  // namespace deepshield
