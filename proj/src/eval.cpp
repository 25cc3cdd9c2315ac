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

#include "deepshield/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "deepshield/losses.hpp"
#include "deepshield/patch.hpp"

namespace deepshield {

namespace fs = std::filesystem;

template <typename Scalar>
double predict_clip(const Detector<Scalar>& model, const VideoClip& clip) {
  const auto features = model.encode(clip);
  return static_cast<double>(model.classify(global_clip_feature(features.class_embeddings), Head::Clip));
}

VideoPrediction make_prediction(std::string video_id, std::vector<double> clip_probs, Label label) {
  DS_CHECK(!clip_probs.empty(), "invalid_argument", "a prediction needs at least one clip");
  VideoPrediction p;
  p.video_id = std::move(video_id);
  p.label = label;
  p.video_prob = std::accumulate(clip_probs.begin(), clip_probs.end(), 0.0) / static_cast<double>(clip_probs.size());
  p.clip_probs = std::move(clip_probs);
  return p;
}

template <typename Scalar>
VideoPrediction predict_video(const Detector<Scalar>& model, const Video& video) {
  std::vector<double> probs;
  for (const auto& clip : sample_inference_clips(video, model.config().num_frames))
    probs.push_back(predict_clip(model, clip));
  return make_prediction(video.record.video_id, std::move(probs), video.record.label);
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  DS_CHECK(scores.size() == labels.size(), "shape_mismatch", "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  DS_CHECK(n_pos > 0 && n_neg > 0, "single_class", "AUC needs both real and fake samples");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

double video_auc(const std::vector<VideoPrediction>& predictions) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : predictions) {
    scores.push_back(p.video_prob);
    labels.push_back(label_value(p.label));
  }
  return roc_auc(scores, labels);
}

template <typename Scalar>
Matrix<double> patch_probabilities(const Detector<Scalar>& model, const VideoClip& clip) {
  const auto features = model.encode(clip);
  const Vector<Scalar> flat = model.head_probs(Head::Patch, features.patch_embeddings);
  const int frames = clip.length(), patches = model.config().num_patches();
  return Eigen::Map<const Matrix<Scalar>>(flat.data(), frames, patches).template cast<double>();
}

Eigen::Vector3f colormap_lookup(const std::string& colormap, float v) {
  v = std::clamp(v, 0.0f, 1.0f);
  if (colormap == "gray") return Eigen::Vector3f::Constant(v);
  if (colormap == "hot") {
    return {std::clamp(3 * v, 0.0f, 1.0f), std::clamp(3 * v - 1, 0.0f, 1.0f), std::clamp(3 * v - 2, 0.0f, 1.0f)};
  }
  DS_CHECK(colormap == "jet", "invalid_argument", "unknown colormap '" + colormap + "'");
  auto ramp = [](float x) { return std::clamp(1.5f - std::abs(4 * x), 0.0f, 1.0f); };
  return {ramp(v - 0.75f), ramp(v - 0.5f), ramp(v - 0.25f)};
}

std::vector<fs::path> emit_patch_heatmap(const Detector<float>& model, const VideoClip& clip, const fs::path& out_dir,
                                         const HeatmapOptions& options) {
  DS_CHECK(options.alpha >= 0 && options.alpha <= 1, "out_of_range", "overlay alpha must be in [0, 1]");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  DS_CHECK(!ec, "io", "cannot create '" + out_dir.string() + "': " + ec.message());

  const Matrix<double> probs = patch_probabilities(model, clip);
  const int grid = model.config().grid();
  const int patch = model.config().patch_size;
  const float alpha = static_cast<float>(options.alpha);
  std::vector<fs::path> written;
  for (int t = 0; t < clip.length(); ++t) {
    const Frame& f = clip.frames[static_cast<std::size_t>(t)];
    Frame overlay = f;
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x) {
        const int gy = std::min(y / patch, grid - 1), gx = std::min(x / patch, grid - 1);
        const Eigen::Vector3f color = colormap_lookup(options.colormap, static_cast<float>(probs(t, gy * grid + gx)));
        for (int c = 0; c < 3; ++c)
          overlay.channels[c](y, x) = (1 - alpha) * f.channels[c](y, x) + alpha * color(c);
      }
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.png", t);
    write_png_rgb(out_dir / name, overlay);
    written.push_back(out_dir / name);
  }

  nlohmann::json doc;
  doc["source_id"] = clip.source_id;
  doc["start_index"] = clip.start_index;
  doc["frames"] = clip.length();
  doc["grid"] = {grid, grid};
  doc["probs"] = nlohmann::json::array();
  for (int t = 0; t < probs.rows(); ++t) {
    std::vector<double> row(probs.row(t).data(), probs.row(t).data() + probs.cols());
    doc["probs"].push_back(row);
  }
  const fs::path json_path = out_dir / "patch_probs.json";
  std::ofstream out(json_path);
  DS_CHECK(out, "io", "cannot write '" + json_path.string() + "'");
  out << doc.dump(2) << '\n';
  written.push_back(json_path);
  return written;
}

std::string EvalReport::to_json() const {
  nlohmann::json doc;
  doc["auc"] = auc;
  doc["patch_auc"] = patch_auc ? nlohmann::json(*patch_auc) : nlohmann::json(nullptr);
  doc["n_patches"] = n_patches;
  doc["n_videos"] = per_video.size();
  doc["per_video"] = nlohmann::json::array();
  for (const auto& p : per_video) {
    doc["per_video"].push_back(
        {{"video_id", p.video_id}, {"video_prob", p.video_prob}, {"label", std::string(label_name(p.label))}});
  }
  return doc.dump(2);
}

PatchScores collect_patch_scores(const Detector<float>& model, const std::vector<Video>& videos, int theta) {
  PatchScores out;
  const int clip_len = model.config().num_frames, patches = model.config().num_patches();
  for (const auto& v : videos) {
    if (v.masks.empty()) continue;
    for (int start : inference_clip_starts(v.frame_count(), clip_len)) {
      const Matrix<double> probs = patch_probabilities(model, extract_clip(v, start, clip_len));
      const PatchLabelGrid grid = patch_labels(extract_mask(v, start, clip_len), patches, theta);
      for (Eigen::Index t = 0; t < probs.rows(); ++t)
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
          out.probs.push_back(probs(t, k));
          out.labels.push_back(grid.labels(t, k));
        }
    }
  }
  return out;
}

EvalReport evaluate(const Detector<float>& model, const std::vector<Video>& videos, int theta) {
  EvalReport report;
  for (const auto& v : videos) report.per_video.push_back(predict_video(model, v));
  report.auc = video_auc(report.per_video);
  const PatchScores scores = collect_patch_scores(model, videos, theta);
  report.n_patches = scores.probs.size();
  const auto positives = std::count(scores.labels.begin(), scores.labels.end(), 1);
  if (positives > 0 && positives < static_cast<long>(scores.labels.size())) {
    report.patch_auc = roc_auc(scores.probs, scores.labels);
  }
  return report;
}

template double predict_clip(const Detector<float>&, const VideoClip&);
template double predict_clip(const Detector<double>&, const VideoClip&);
template VideoPrediction predict_video(const Detector<float>&, const Video&);
template VideoPrediction predict_video(const Detector<double>&, const Video&);
template Matrix<double> patch_probabilities(const Detector<float>&, const VideoClip&);
template Matrix<double> patch_probabilities(const Detector<double>&, const VideoClip&);

}  // namespace deepshield
