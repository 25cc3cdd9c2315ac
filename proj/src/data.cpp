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

#include "deepshield/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace deepshield {

namespace fs = std::filesystem;
using nlohmann::json;

BlendMask zero_mask(int frames, int height, int width) {
  return BlendMask(static_cast<std::size_t>(frames), ImagePlane::Zero(height, width));
}

bool mask_is_zero(const BlendMask& mask) {
  return std::all_of(mask.begin(), mask.end(), [](const ImagePlane& m) { return (m == 0.0f).all(); });
}

std::vector<LandmarkSet> read_landmarks(const fs::path& path) {
  std::ifstream in(path);
  DS_CHECK(in, "io", "cannot open landmark file '" + path.string() + "'");
  std::vector<LandmarkSet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::vector<float> values;
    std::string token;
    while (ss >> token) {
      try {
        std::size_t used = 0;
        values.push_back(std::stof(token, &used));
        DS_CHECK(used == token.size(), "malformed_landmarks", "");
      } catch (const std::exception&) {
        throw Error("malformed_landmarks",
                    path.string() + ":" + std::to_string(line_no) + ": non-numeric token '" + token + "'");
      }
    }
    DS_CHECK(values.size() % 2 == 0, "malformed_landmarks",
             path.string() + ":" + std::to_string(line_no) + ": odd number of coordinates");
    LandmarkSet set;
    for (std::size_t i = 0; i < values.size(); i += 2) set.points.emplace_back(values[i], values[i + 1]);
    out.push_back(std::move(set));
  }
  return out;
}

void write_landmarks(const fs::path& path, const std::vector<LandmarkSet>& landmarks) {
  std::ofstream out(path);
  DS_CHECK(out, "io", "cannot write landmark file '" + path.string() + "'");
  out.precision(9);
  for (const auto& set : landmarks) {
    for (std::size_t i = 0; i < set.points.size(); ++i) {
      if (i) out << ' ';
      out << set.points[i].x() << ' ' << set.points[i].y();
    }
    out << '\n';
  }
}

namespace {

std::vector<fs::path> numbered_pngs(const fs::path& dir, const std::string& video_id, const char* what) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (std::size_t i = 0; i < files.size(); ++i) {
    char expected[32];
    std::snprintf(expected, sizeof(expected), "%06zu.png", i);
    DS_CHECK(files[i].filename() == expected, "missing_frames",
             "video '" + video_id + "': " + what + " " + expected + " is missing");
  }
  return files;
}

FaceBox parse_box(const json& j, const std::string& video_id) {
  DS_CHECK(j.is_array() && j.size() == 4, "malformed_metadata",
           "video '" + video_id + "': face_box entries must be [x, y, w, h]");
  return FaceBox{j[0].get<float>(), j[1].get<float>(), j[2].get<float>(), j[3].get<float>()};
}

VideoRecord load_record(const fs::path& dir, const DatasetOptions& options) {
  VideoRecord rec;
  rec.video_id = dir.filename().string();
  const fs::path meta_path = dir / "meta.json";
  DS_CHECK(fs::exists(meta_path), "malformed_metadata", "video '" + rec.video_id + "': meta.json missing");
  json meta;
  try {
    std::ifstream in(meta_path);
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed_metadata", "video '" + rec.video_id + "': " + e.what());
  }
  const std::string label = meta.value("label", "");
  DS_CHECK(label == "real" || label == "fake", "malformed_metadata",
           "video '" + rec.video_id + "': label must be 'real' or 'fake'");
  rec.label = label == "fake" ? Label::Fake : Label::Real;
  rec.domain_tag = meta.value("manipulation", rec.label == Label::Real ? "real" : "unknown");

  rec.frame_paths = numbered_pngs(dir / "frames", rec.video_id, "frame");
  DS_CHECK(rec.frame_count() >= options.min_frames, "missing_frames",
           "video '" + rec.video_id + "' has " + std::to_string(rec.frame_count()) + " frames; at least " +
               std::to_string(options.min_frames) + " are required");

  if (meta.contains("face_box")) {
    const json& boxes = meta["face_box"];
    if (boxes.is_array() && !boxes.empty() && boxes[0].is_array()) {
      DS_CHECK(static_cast<int>(boxes.size()) == rec.frame_count(), "malformed_metadata",
               "video '" + rec.video_id + "': face_box count does not match frame count");
      for (const auto& b : boxes) rec.face_boxes.push_back(parse_box(b, rec.video_id));
    } else {
      rec.face_boxes.assign(static_cast<std::size_t>(rec.frame_count()), parse_box(boxes, rec.video_id));
    }
  }

  if (meta.contains("landmarks") && !meta["landmarks"].is_null()) {
    rec.landmark_path = dir / meta["landmarks"].get<std::string>();
  }
  if (rec.label == Label::Real) {
    DS_CHECK(rec.landmark_path && fs::exists(*rec.landmark_path), "malformed_landmarks",
             "real video '" + rec.video_id + "' has no landmark file");
  }
  if (rec.landmark_path) {
    DS_CHECK(fs::exists(*rec.landmark_path), "malformed_landmarks",
             "video '" + rec.video_id + "': landmark file '" + rec.landmark_path->string() + "' missing");
    const auto landmarks = read_landmarks(*rec.landmark_path);
    DS_CHECK(static_cast<int>(landmarks.size()) == rec.frame_count(), "malformed_landmarks",
             "video '" + rec.video_id + "': " + std::to_string(landmarks.size()) + " landmark rows for " +
                 std::to_string(rec.frame_count()) + " frames");
    const auto [w, h] = png_size(rec.frame_paths.front());
    for (std::size_t t = 0; t < landmarks.size(); ++t) {
      DS_CHECK(landmarks[t].points.size() >= 3, "malformed_landmarks",
               "video '" + rec.video_id + "' frame " + std::to_string(t) + ": fewer than 3 landmarks");
      for (const auto& p : landmarks[t].points) {
        DS_CHECK(p.x() >= 0 && p.y() >= 0 && p.x() <= w && p.y() <= h, "malformed_landmarks",
                 "video '" + rec.video_id + "' frame " + std::to_string(t) + ": landmark out of frame bounds");
      }
    }
  }
  if (meta.contains("masks") && !meta["masks"].is_null()) {
    rec.mask_paths = numbered_pngs(dir / meta["masks"].get<std::string>(), rec.video_id, "mask");
    DS_CHECK(rec.mask_paths.empty() || rec.frame_count() == static_cast<int>(rec.mask_paths.size()),
             "missing_frames", "video '" + rec.video_id + "': mask count does not match frame count");
  }
  return rec;
}

}  // namespace

std::vector<VideoRecord> load_dataset(const fs::path& root, const DatasetOptions& options) {
  DS_CHECK(fs::is_directory(root), "io", "dataset root '" + root.string() + "' is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<VideoRecord> records;
  records.reserve(dirs.size());
  for (const auto& d : dirs) records.push_back(load_record(d, options));
  if (records.empty()) warn("dataset '" + root.string() + "' contains no videos");
  return records;
}

Video load_video(const VideoRecord& record, int image_size) {
  Video video;
  video.record = record;
  video.frames.reserve(record.frame_paths.size());
  float sx = 1.0f, sy = 1.0f;
  for (const auto& p : record.frame_paths) {
    Frame f = read_png_rgb(p);
    if (image_size > 0 && (f.height() != image_size || f.width() != image_size)) {
      sx = static_cast<float>(image_size) / f.width();
      sy = static_cast<float>(image_size) / f.height();
      f = resize_bilinear(f, image_size, image_size);
    }
    video.frames.push_back(std::move(f));
  }
  if (record.landmark_path) {
    video.landmarks = read_landmarks(*record.landmark_path);
    for (auto& set : video.landmarks)
      for (auto& p : set.points) p = Eigen::Vector2f(p.x() * sx, p.y() * sy);
  }
  for (const auto& p : record.mask_paths) {
    ImagePlane m = read_png_gray(p);
    DS_CHECK(m.rows() == video.frames.front().height() && m.cols() == video.frames.front().width(), "io",
             "mask '" + p.string() + "' does not match the frame size");
    video.masks.push_back(std::move(m));
  }
  return video;
}

std::vector<int> training_clip_starts(int frame_count, int num_clips, int clip_len, Rng& rng) {
  DS_CHECK(num_clips >= 1 && clip_len >= 1, "invalid_argument", "num_clips and clip_len must be positive");
  DS_CHECK(frame_count >= clip_len, "too_short",
           "video has " + std::to_string(frame_count) + " frames, clip needs " + std::to_string(clip_len));
  std::uniform_int_distribution<int> start(0, frame_count - clip_len);
  std::vector<int> starts(static_cast<std::size_t>(num_clips));
  for (auto& s : starts) s = start(rng);
  return starts;
}

std::vector<int> inference_clip_starts(int frame_count, int clip_len) {
  const int segment = frame_count / kInferenceSegments;
  DS_CHECK(segment >= clip_len, "too_short",
           "video has " + std::to_string(frame_count) + " frames; inference needs " +
               std::to_string(kInferenceSegments * clip_len));
  std::vector<int> starts;
  for (int k = 0; k < kInferenceSegments; ++k) starts.push_back(k * segment);
  return starts;
}

VideoClip extract_clip(const Video& video, int start, int clip_len) {
  DS_CHECK(start >= 0 && start + clip_len <= video.frame_count(), "too_short", "clip exceeds video length");
  VideoClip clip;
  clip.source_id = video.record.video_id;
  clip.start_index = start;
  clip.frames.assign(video.frames.begin() + start, video.frames.begin() + start + clip_len);
  return clip;
}

std::vector<LandmarkSet> extract_landmarks(const Video& video, int start, int clip_len) {
  DS_CHECK(static_cast<int>(video.landmarks.size()) >= start + clip_len, "malformed_landmarks",
           "video '" + video.record.video_id + "' has no landmarks for the requested clip");
  return {video.landmarks.begin() + start, video.landmarks.begin() + start + clip_len};
}

BlendMask extract_mask(const Video& video, int start, int clip_len) {
  if (video.masks.empty()) return {};
  return {video.masks.begin() + start, video.masks.begin() + start + clip_len};
}

std::vector<VideoClip> sample_training_clips(const Video& video, int num_clips, int clip_len, Rng& rng) {
  std::vector<VideoClip> clips;
  for (int s : training_clip_starts(video.frame_count(), num_clips, clip_len, rng))
    clips.push_back(extract_clip(video, s, clip_len));
  return clips;
}

std::vector<VideoClip> sample_inference_clips(const Video& video, int clip_len) {
  std::vector<VideoClip> clips;
  for (int s : inference_clip_starts(video.frame_count(), clip_len)) clips.push_back(extract_clip(video, s, clip_len));
  return clips;
}

}  // namespace deepshield
