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

#include "deepshield/backbone.hpp"

namespace deepshield {

struct VideoPrediction {
  std::string video_id;
  std::vector<double> clip_probs;
  double video_prob = 0;
  Label label = Label::Real;
};

/// Clip-level fake probability from the mean class embedding.
template <typename Scalar>
double predict_clip(const Detector<Scalar>& model, const VideoClip& clip);

/// Mean of the clip probabilities of the four inference clips.
template <typename Scalar>
VideoPrediction predict_video(const Detector<Scalar>& model, const Video& video);

/// Builds a prediction from externally computed clip probabilities.
VideoPrediction make_prediction(std::string video_id, std::vector<double> clip_probs, Label label);

/// ROC AUC via the Mann-Whitney rank statistic; ties earn half credit. Throws single_class.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);
double video_auc(const std::vector<VideoPrediction>& predictions);

/// T x P patch fake-probabilities of one clip.
template <typename Scalar>
Matrix<double> patch_probabilities(const Detector<Scalar>& model, const VideoClip& clip);

struct HeatmapOptions {
  std::string colormap = "jet";
  double alpha = 0.5;
};

/// RGB color in [0, 1] for a probability; colormap is "jet", "hot" or "gray".
Eigen::Vector3f colormap_lookup(const std::string& colormap, float value);

/// Writes frame_XXXX.png overlays and patch_probs.json into `out_dir`; returns the written paths.
std::vector<std::filesystem::path> emit_patch_heatmap(const Detector<float>& model, const VideoClip& clip,
                                                      const std::filesystem::path& out_dir,
                                                      const HeatmapOptions& options = {});

/// Patch probabilities and labels pooled over the inference clips of every video with stored masks.
struct PatchScores {
  std::vector<double> probs;
  std::vector<int> labels;
};

PatchScores collect_patch_scores(const Detector<float>& model, const std::vector<Video>& videos, int theta);

struct EvalReport {
  double auc = 0;
  /// Patch-level AUC on videos with stored masks; unset when there are none or one class only.
  std::optional<double> patch_auc;
  std::size_t n_patches = 0;
  std::vector<VideoPrediction> per_video;

  /// {auc, patch_auc, n_patches, n_videos, per_video: [{video_id, video_prob, label}]}
  std::string to_json() const;
};

EvalReport evaluate(const Detector<float>& model, const std::vector<Video>& videos, int theta = 10);

extern template double predict_clip(const Detector<float>&, const VideoClip&);
extern template double predict_clip(const Detector<double>&, const VideoClip&);
extern template VideoPrediction predict_video(const Detector<float>&, const Video&);
extern template VideoPrediction predict_video(const Detector<double>&, const Video&);

}  // namespace deepshield
