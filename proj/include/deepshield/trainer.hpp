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
#include "deepshield/checkpoint.hpp"
#include "deepshield/config.hpp"
#include "deepshield/dfa.hpp"
#include "deepshield/patch.hpp"

namespace deepshield {

/// Decoded videos split by label.
struct VideoPool {
  std::vector<Video> real;
  std::vector<Video> fake;

  std::size_t size() const { return real.size() + fake.size(); }
  static VideoPool from_videos(std::vector<Video> videos);
  static VideoPool load(const std::vector<VideoRecord>& records, int image_size);
};

/// One source video's contribution to a batch: its clips and supervision.
struct BatchSample {
  std::vector<VideoClip> clips;
  /// Per-clip masks; zero for real clips, empty for dataset fakes (no patch supervision).
  std::vector<BlendMask> masks;
  std::vector<PatchLabelGrid> patch_labels;
  Label label = Label::Real;
  FeatureOrigin origin = FeatureOrigin::Dataset;
  std::string domain_tag;
  std::string video_id;
  /// Participates in the patch loss (real clips and SAM blends only).
  bool lpg = false;
};

/// B_real, B_fake (blends and dataset fakes), and the DFA plan that turns each fake sample into two
/// augmented features once encoded.
struct TrainingBatch {
  std::vector<BatchSample> real;
  std::vector<BatchSample> fake;
  DfaPlan dfa_plan;

  std::size_t blend_count() const;
  std::size_t dfa_count() const { return 2 * fake.size(); }
  std::size_t size() const { return real.size() + fake.size() + dfa_count(); }
};

/// Samples batch_videos / 2 fake slots. A slot is either a SAM blend of a random real video
/// (adding the original to B_real) or a dataset fake paired with a random real video.
TrainingBatch compose_batch(const VideoPool& pool, Rng& rng, const Config& config);

/// Feature-level view of a batch: row order is B_real, B_fake, B_DFA.
template <typename Scalar>
struct MaterializedBatch {
  Matrix<Scalar> global_features;
  std::vector<int> labels;
  std::vector<FeatureOrigin> origins;
};

/// Runs DFA on per-sample class embeddings produced by `encode` (one (N*T) x C matrix per sample).
template <typename Scalar, typename Encode>
MaterializedBatch<Scalar> materialize_batch(const TrainingBatch& batch, Encode&& encode, const DfaConfig& dfa) {
  MaterializedBatch<Scalar> out;
  std::vector<RowVector<Scalar>> rows;
  auto push = [&](const Matrix<Scalar>& f, Label l, FeatureOrigin o) {
    rows.push_back(f.colwise().mean());
    out.labels.push_back(label_value(l));
    out.origins.push_back(o);
  };
  for (const auto& s : batch.real) push(encode(s), s.label, s.origin);
  std::vector<FakeFeatureGroup<Scalar>> groups;
  for (const auto& s : batch.fake) {
    groups.push_back({encode(s), s.domain_tag});
    push(groups.back().features, s.label, s.origin);
  }
  for (const auto& a : apply_dfa(groups, batch.dfa_plan, dfa)) push(a.features, a.label, a.origin);
  out.global_features.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.global_features.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

struct StepMetrics {
  long step = 0;
  int epoch = 0;
  double lr = 0;
  double loss_total = 0;
  double loss_lpg = 0;
  double loss_cls = 0;
  double loss_supcon = 0;
  double grad_norm = 0;
};

/// Zeroes gradients, then fills them with d L_overall / d parameters for one batch.
template <typename Scalar>
StepMetrics compute_loss_and_gradients(Detector<Scalar>& model, const TrainingBatch& batch, const Config& config);

/// Adam with L2 weight decay added to the gradient.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterStore<Scalar>& params, double beta1, double beta2, double eps, double weight_decay);

  void step(ParameterStore<Scalar>& params, double lr);
  long steps_taken() const { return t_; }

  /// Moment buffers are stored as "<param>.adam_m" / "<param>.adam_v".
  void save(TensorArchive& archive, const ParameterStore<Scalar>& params) const;
  void load(const TensorArchive& archive, const ParameterStore<Scalar>& params, long steps_taken);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, weight_decay_ = 0;
  long t_ = 0;
  std::vector<Matrix<Scalar>> m_, v_;
};

struct CosineSchedule {
  double base_lr = 3e-4;
  long total_steps = 1;
  bool constant = false;

  /// base_lr * (1 + cos(pi * s / (S - 1))) / 2, reaching 0 at the final step.
  double lr(long step) const;
};

/// One optimizer update; throws non_finite_loss when the loss or gradients are not finite.
StepMetrics train_step(Detector<float>& model, const TrainingBatch& batch, Adam<float>& optimizer,
                       const Config& config, double lr);

int resolved_iters_per_epoch(const Config& config, std::size_t dataset_size);

/// Model, optimizer, and progress as saved after each epoch.
struct TrainingState {
  Detector<float> model;
  Adam<float> optimizer;
  long step = 0;
  int epoch = 0;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state, const Config& config);
/// Restores the state; the checkpoint's encoder geometry must match `config`.
TrainingState load_checkpoint(const std::filesystem::path& path, const Config& config);
/// Config stored inside a checkpoint.
Config checkpoint_config(const std::filesystem::path& path);
/// Copies tensors with matching names and shapes; returns the number copied.
std::size_t load_pretrained(Detector<float>& model, const std::filesystem::path& path);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  /// Stop after this many total steps (for smoke runs); the schedule still spans the full run.
  std::optional<long> max_steps;
  /// Videos used instead of loading dataset.root.
  const VideoPool* pool = nullptr;
};

/// Full training run; returns the path of the last checkpoint written.
std::filesystem::path train(const Config& config, const TrainOptions& options = {});

}  // namespace deepshield
