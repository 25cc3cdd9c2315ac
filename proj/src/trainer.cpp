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

#include "deepshield/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "deepshield/losses.hpp"
#include "deepshield/sam.hpp"

namespace deepshield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kBlendTag = "sam-blend";

std::atomic<bool> g_degenerate_warned{false};
std::atomic<bool> g_denominator_warned{false};

std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

PatchLabelGrid zero_labels(int frames, int patches, int theta) {
  return {Eigen::MatrixXi::Zero(frames, patches), theta};
}

}  // namespace

VideoPool VideoPool::from_videos(std::vector<Video> videos) {
  VideoPool pool;
  for (auto& v : videos) (v.record.label == Label::Real ? pool.real : pool.fake).push_back(std::move(v));
  return pool;
}

VideoPool VideoPool::load(const std::vector<VideoRecord>& records, int image_size) {
  std::vector<Video> videos;
  videos.reserve(records.size());
  for (const auto& r : records) videos.push_back(load_video(r, image_size));
  return from_videos(std::move(videos));
}

std::size_t TrainingBatch::blend_count() const {
  return static_cast<std::size_t>(
      std::count_if(fake.begin(), fake.end(), [](const BatchSample& s) { return s.origin == FeatureOrigin::SamBlend; }));
}

TrainingBatch compose_batch(const VideoPool& pool, Rng& rng, const Config& config) {
  DS_CHECK(!pool.real.empty(), "empty_dataset", "training needs at least one real video");
  const auto& tc = config.trainer;
  const int clip_len = config.clip_len();
  const int patches = config.encoder.model.num_patches();
  const int theta = config.losses.theta;

  auto pick_starts = [&](const Video& v) {
    auto starts = training_clip_starts(v.frame_count(), tc.clips_per_video, clip_len, rng);
    std::shuffle(starts.begin(), starts.end(), rng);
    starts.resize(static_cast<std::size_t>(tc.clips_per_iteration));
    return starts;
  };
  auto real_sample = [&](const Video& v, const std::vector<int>& starts) {
    BatchSample s;
    s.label = Label::Real;
    s.origin = FeatureOrigin::Dataset;
    s.domain_tag = "real";
    s.video_id = v.record.video_id;
    s.lpg = true;
    for (int st : starts) {
      s.clips.push_back(extract_clip(v, st, clip_len));
      const auto& f = s.clips.back().frames.front();
      s.masks.push_back(zero_mask(clip_len, f.height(), f.width()));
      s.patch_labels.push_back(zero_labels(clip_len, patches, theta));
    }
    return s;
  };

  TrainingBatch batch;
  std::bernoulli_distribution sam_coin(tc.sam_fake_prob);
  for (int slot = 0; slot < config.pairs_per_batch(); ++slot) {
    const bool use_sam = pool.fake.empty() || sam_coin(rng);
    if (!use_sam) {
      const Video& f = pool.fake[uniform_index(pool.fake.size(), rng)];
      BatchSample s;
      s.label = Label::Fake;
      s.origin = FeatureOrigin::Dataset;
      s.domain_tag = f.record.domain_tag;
      s.video_id = f.record.video_id;
      for (int st : pick_starts(f)) s.clips.push_back(extract_clip(f, st, clip_len));
      batch.fake.push_back(std::move(s));
      const Video& r = pool.real[uniform_index(pool.real.size(), rng)];
      batch.real.push_back(real_sample(r, pick_starts(r)));
      continue;
    }

    std::string last_error;
    bool done = false;
    for (int attempt = 0; attempt <= tc.max_sam_retries && !done; ++attempt) {
      const Video& r = pool.real[uniform_index(pool.real.size(), rng)];
      const auto starts = pick_starts(r);
      BatchSample blend;
      blend.label = Label::Fake;
      blend.origin = FeatureOrigin::SamBlend;
      blend.domain_tag = kBlendTag;
      blend.video_id = r.record.video_id + "+sam";
      blend.lpg = true;
      try {
        for (int st : starts) {
          auto result =
              temporal_artifact_generate(extract_clip(r, st, clip_len), extract_landmarks(r, st, clip_len), rng, config.sam);
          DS_CHECK(!mask_is_zero(result.mask), "sam_failed", "blend mask is empty");
          blend.patch_labels.push_back(patch_labels(result.mask, patches, theta));
          blend.clips.push_back(std::move(result.blended));
          blend.masks.push_back(std::move(result.mask));
        }
      } catch (const Error& e) {
        if (e.code() != "degenerate_hull" && e.code() != "sam_failed" && e.code() != "landmark_count_mismatch") throw;
        last_error = "video '" + r.record.video_id + "': " + e.what();
        continue;
      }
      batch.real.push_back(real_sample(r, starts));
      batch.fake.push_back(std::move(blend));
      done = true;
    }
    DS_CHECK(done, "sam_failed",
             "SAM failed after " + std::to_string(tc.max_sam_retries + 1) + " attempts; last: " + last_error);
  }

  std::vector<std::string> tags;
  for (const auto& s : batch.fake) tags.push_back(s.domain_tag);
  DfaConfig dfa = config.dfa;
  dfa.warn_degenerate = false;
  batch.dfa_plan = plan_dfa(tags, rng, dfa);
  if (batch.dfa_plan.degenerate && !g_degenerate_warned.exchange(true)) {
    warn("all fake samples in a batch share domain tag '" + tags.front() +
         "'; DFA pairs within the tag (further occurrences are not reported)");
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Loss assembly

template <typename Scalar>
StepMetrics compute_loss_and_gradients(Detector<Scalar>& model, const TrainingBatch& batch, const Config& config) {
  model.params().zero_grad();
  const auto& enc_cfg = model.config();
  const int frames = enc_cfg.num_frames;
  const int patches = enc_cfg.num_patches();
  const Eigen::Index dim = enc_cfg.embed_dim;
  const LossWeights weights = config.losses.weights();
  const Scalar omega = static_cast<Scalar>(weights.omega);
  const Scalar upsilon = static_cast<Scalar>(weights.upsilon);

  std::vector<const BatchSample*> samples;
  for (const auto& s : batch.real) samples.push_back(&s);
  for (const auto& s : batch.fake) samples.push_back(&s);
  const std::size_t n_real = batch.real.size(), n_fake = batch.fake.size();

  struct Encoded {
    EncoderCache<Scalar> cache;
    ClipFeatures<Scalar> features;
    Matrix<Scalar> d_patch;
  };
  std::vector<std::vector<Encoded>> encoded(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const auto& clip : samples[i]->clips) {
      DS_CHECK(clip.length() == frames, "shape_mismatch", "clip length does not match encoder.num_frames");
      Encoded e;
      e.features = model.encode(clip, e.cache);
      e.d_patch = Matrix<Scalar>::Zero(e.features.patch_embeddings.rows(), dim);
      encoded[i].push_back(std::move(e));
    }
  }

  // Patch loss over real and blend clips.
  int lpg_clips = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i]->lpg) lpg_clips += static_cast<int>(samples[i]->clips.size());
  Scalar loss_lpg = 0;
  for (std::size_t i = 0; i < samples.size() && lpg_clips > 0; ++i) {
    if (!samples[i]->lpg) continue;
    for (std::size_t c = 0; c < encoded[i].size(); ++c) {
      auto& e = encoded[i][c];
      const Vector<Scalar> flat = model.head_probs(Head::Patch, e.features.patch_embeddings);
      const Matrix<Scalar> probs = Eigen::Map<const Matrix<Scalar>>(flat.data(), frames, patches);
      const auto& labels = samples[i]->patch_labels[c].labels;
      loss_lpg += lpg_loss(probs, labels);
      if (omega == Scalar(0)) continue;
      const Matrix<Scalar> g = lpg_loss_gradient(probs, labels) * (omega / static_cast<Scalar>(lpg_clips));
      const Vector<Scalar> g_flat = Eigen::Map<const Vector<Scalar>>(g.data(), g.size());
      e.d_patch = model.head_backward(Head::Patch, e.features.patch_embeddings, g_flat);
    }
  }
  if (lpg_clips > 0) loss_lpg /= static_cast<Scalar>(lpg_clips);

  // Global features: encoded samples, then DFA features.
  std::vector<Matrix<Scalar>> stacked(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Matrix<Scalar> m(frames * static_cast<Eigen::Index>(encoded[i].size()), dim);
    for (std::size_t c = 0; c < encoded[i].size(); ++c)
      m.middleRows(static_cast<Eigen::Index>(c) * frames, frames) = encoded[i][c].features.class_embeddings;
    stacked[i] = std::move(m);
  }
  std::vector<FakeFeatureGroup<Scalar>> groups;
  for (std::size_t k = 0; k < n_fake; ++k) groups.push_back({stacked[n_real + k], samples[n_real + k]->domain_tag});
  const auto augmented = apply_dfa(groups, batch.dfa_plan, config.dfa);

  const Eigen::Index total = static_cast<Eigen::Index>(samples.size() + augmented.size());
  Matrix<Scalar> global(total, dim);
  std::vector<int> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    global.row(static_cast<Eigen::Index>(i)) = global_clip_feature(stacked[i]);
    labels.push_back(label_value(samples[i]->label));
  }
  for (std::size_t k = 0; k < augmented.size(); ++k) {
    global.row(static_cast<Eigen::Index>(samples.size() + k)) = augmented[k].features.colwise().mean();
    labels.push_back(label_value(augmented[k].label));
  }

  const Vector<Scalar> probs = model.head_probs(Head::Clip, global);
  const Scalar loss_cls = cls_loss(probs, labels);
  Matrix<Scalar> d_global = model.head_backward(Head::Clip, global, cls_loss_gradient(probs, labels));
  const auto supcon = supcon_loss(global, labels, config.losses.supcon());
  d_global += upsilon * supcon.grad;

  const Scalar loss_total = overall_loss(loss_lpg, gfd_loss(loss_cls, supcon.loss, weights), weights);
  if (!std::isfinite(static_cast<double>(loss_total))) {
    std::ostringstream os;
    os << "non-finite loss: total=" << loss_total << " lpg=" << loss_lpg << " cls=" << loss_cls
       << " supcon=" << supcon.loss;
    throw Error("non_finite_loss", os.str());
  }

  // Back to per-frame class embeddings.
  std::vector<Matrix<Scalar>> d_stacked(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto rows = stacked[i].rows();
    d_stacked[i] = d_global.row(static_cast<Eigen::Index>(i)).replicate(rows, 1) / static_cast<Scalar>(rows);
  }
  if (!groups.empty()) {
    std::vector<Matrix<Scalar>> d_aug;
    for (std::size_t k = 0; k < augmented.size(); ++k) {
      const auto rows = augmented[k].features.rows();
      d_aug.push_back(d_global.row(static_cast<Eigen::Index>(samples.size() + k)).replicate(rows, 1) /
                      static_cast<Scalar>(rows));
    }
    const auto d_groups = dfa_backward(groups, batch.dfa_plan, d_aug, config.dfa);
    for (std::size_t k = 0; k < n_fake; ++k) d_stacked[n_real + k] += d_groups[k];
  }
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t c = 0; c < encoded[i].size(); ++c)
      model.encode_backward(encoded[i][c].cache, d_stacked[i].middleRows(static_cast<Eigen::Index>(c) * frames, frames),
                            encoded[i][c].d_patch);

  StepMetrics m;
  m.loss_total = static_cast<double>(loss_total);
  m.loss_lpg = static_cast<double>(loss_lpg);
  m.loss_cls = static_cast<double>(loss_cls);
  m.loss_supcon = static_cast<double>(supcon.loss);
  double sq = 0;
  for (const auto& p : model.params())
    if (p.trainable) sq += static_cast<double>(p.grad.squaredNorm());
  m.grad_norm = std::sqrt(sq);
  return m;
}

template StepMetrics compute_loss_and_gradients(Detector<float>&, const TrainingBatch&, const Config&);
template StepMetrics compute_loss_and_gradients(Detector<double>&, const TrainingBatch&, const Config&);

// ---------------------------------------------------------------------------
// Optimizer and schedule

template <typename Scalar>
Adam<Scalar>::Adam(const ParameterStore<Scalar>& params, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  for (const auto& p : params) {
    m_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
  }
}

template <typename Scalar>
void Adam<Scalar>::step(ParameterStore<Scalar>& params, double lr) {
  DS_CHECK(params.size() == m_.size(), "shape_mismatch", "optimizer was built for a different model");
  ++t_;
  const Scalar b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const Scalar step = static_cast<Scalar>(lr), eps = static_cast<Scalar>(eps_), wd = static_cast<Scalar>(weight_decay_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    const auto g = (p.grad + wd * p.value).array().eval();
    m_[i].array() = b1 * m_[i].array() + (Scalar(1) - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (Scalar(1) - b2) * g.square();
    p.value.array() -= step * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

template <typename Scalar>
void Adam<Scalar>::save(TensorArchive& archive, const ParameterStore<Scalar>& params) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    archive.add(params[i].name + ".adam_m", m_[i].template cast<float>());
    archive.add(params[i].name + ".adam_v", v_[i].template cast<float>());
  }
}

template <typename Scalar>
void Adam<Scalar>::load(const TensorArchive& archive, const ParameterStore<Scalar>& params, long steps_taken) {
  DS_CHECK(params.size() == m_.size(), "shape_mismatch", "optimizer was built for a different model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = archive.find(params[i].name + ".adam_m");
    const auto* v = archive.find(params[i].name + ".adam_v");
    DS_CHECK(m && v, "bad_checkpoint", "optimizer state for '" + params[i].name + "' is missing");
    DS_CHECK(m->rows() == m_[i].rows() && m->cols() == m_[i].cols(), "config_mismatch",
             "optimizer state for '" + params[i].name + "' has the wrong shape");
    m_[i] = m->template cast<Scalar>();
    v_[i] = v->template cast<Scalar>();
  }
  t_ = steps_taken;
}

template class Adam<float>;
template class Adam<double>;

double CosineSchedule::lr(long step) const {
  if (constant) return base_lr;
  if (total_steps <= 1) return base_lr;
  const double s = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps - 1), 0.0, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * s));
}

StepMetrics train_step(Detector<float>& model, const TrainingBatch& batch, Adam<float>& optimizer, const Config& config,
                       double lr) {
  StepMetrics m = compute_loss_and_gradients(model, batch, config);
  if (!std::isfinite(m.grad_norm)) {
    throw Error("non_finite_loss", "non-finite gradient norm at loss " + std::to_string(m.loss_total));
  }
  optimizer.step(model.params(), lr);
  m.lr = lr;
  return m;
}

int resolved_iters_per_epoch(const Config& config, std::size_t dataset_size) {
  if (config.trainer.iters_per_epoch > 0) return config.trainer.iters_per_epoch;
  const auto per = static_cast<std::size_t>(config.trainer.batch_videos);
  return std::max(1, static_cast<int>((dataset_size + per - 1) / per));
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const fs::path& path, const TrainingState& state, const Config& config) {
  TensorArchive archive;
  json meta;
  meta["kind"] = "training_state";
  meta["step"] = state.step;
  meta["epoch"] = state.epoch;
  meta["adam_steps"] = state.optimizer.steps_taken();
  meta["rng_state"] = state.rng_state;
  meta["config"] = json::parse(config_to_json(config));
  archive.meta_json = meta.dump();
  for (const auto& p : state.model.params()) archive.add(p.name, p.value);
  state.optimizer.save(archive, state.model.params());
  write_archive(path, archive);
}

namespace {

json archive_meta(const TensorArchive& archive, const fs::path& path) {
  json meta = json::parse(archive.meta_json);
  DS_CHECK(meta.value("kind", "") == "training_state", "bad_checkpoint",
           "'" + path.string() + "' is not a training checkpoint");
  return meta;
}

void copy_weights(Detector<float>& model, const TensorArchive& archive, const fs::path& path, bool require_all,
                  std::size_t* copied) {
  std::size_t n = 0;
  for (auto& p : model.params()) {
    const auto* t = archive.find(p.name);
    if (!t) {
      DS_CHECK(!require_all, "bad_checkpoint", "'" + path.string() + "' has no tensor '" + p.name + "'");
      continue;
    }
    DS_CHECK(t->rows() == p.value.rows() && t->cols() == p.value.cols(), "config_mismatch",
             "tensor '" + p.name + "' in '" + path.string() + "' is " + std::to_string(t->rows()) + "x" +
                 std::to_string(t->cols()) + ", model expects " + std::to_string(p.value.rows()) + "x" +
                 std::to_string(p.value.cols()));
    p.value = *t;
    ++n;
  }
  if (copied) *copied = n;
}

}  // namespace

TrainingState load_checkpoint(const fs::path& path, const Config& config) {
  const TensorArchive archive = read_archive(path);
  const json meta = archive_meta(archive, path);
  TrainingState state;
  state.model = Detector<float>(config.encoder.model, config.trainer.seed);
  copy_weights(state.model, archive, path, true, nullptr);
  const auto& tc = config.trainer;
  state.optimizer = Adam<float>(state.model.params(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps, tc.weight_decay);
  state.optimizer.load(archive, state.model.params(), meta.at("adam_steps").get<long>());
  state.step = meta.at("step").get<long>();
  state.epoch = meta.at("epoch").get<int>();
  state.rng_state = meta.at("rng_state").get<std::string>();
  return state;
}

Config checkpoint_config(const fs::path& path) {
  const TensorArchive archive = read_archive(path);
  return parse_config_text(archive_meta(archive, path).at("config").dump());
}

std::size_t load_pretrained(Detector<float>& model, const fs::path& path) {
  const TensorArchive archive = read_archive(path);
  std::size_t copied = 0;
  copy_weights(model, archive, path, false, &copied);
  if (copied == 0) warn("pretrained weights '" + path.string() + "' contain no tensor matching the model");
  return copied;
}

// ---------------------------------------------------------------------------
// Training loop

std::filesystem::path train(const Config& config, const TrainOptions& options) {
  const auto& tc = config.trainer;
  const fs::path out_dir = tc.out_dir;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  DS_CHECK(!ec, "io", "cannot create output directory '" + out_dir.string() + "': " + ec.message());
  write_config(out_dir / "config.json", config);

  VideoPool owned;
  const VideoPool* pool = options.pool;
  if (!pool) {
    DS_CHECK(!config.dataset.root.empty(), "empty_dataset", "dataset.root is not set");
    owned = VideoPool::load(load_dataset(config.dataset.root, {config.dataset.min_frames}), config.image_size());
    pool = &owned;
  }
  DS_CHECK(pool->size() > 0, "empty_dataset", "dataset '" + config.dataset.root + "' contains no videos");

  if (config.losses.denominator == SupConDenominator::Paper && !g_denominator_warned.exchange(true)) {
    warn("supcon uses the same-class denominator of the original formulation; set "
         "losses.denominator=standard for the conventional all-sample denominator");
  }

  const int iters = resolved_iters_per_epoch(config, pool->size());
  const long total = static_cast<long>(tc.epochs) * iters;
  const CosineSchedule schedule{tc.learning_rate, total, tc.schedule == "constant"};

  TrainingState state;
  Rng rng;
  if (options.resume) {
    state = load_checkpoint(*options.resume, config);
    std::istringstream is(state.rng_state);
    is >> rng;
    DS_CHECK(!is.fail(), "bad_checkpoint", "corrupt RNG state in '" + options.resume->string() + "'");
  } else {
    state.model = Detector<float>(config.encoder.model, tc.seed);
    if (!config.encoder.model.pretrained_weights.empty()) {
      load_pretrained(state.model, config.encoder.model.pretrained_weights);
    }
    state.optimizer = Adam<float>(state.model.params(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps, tc.weight_decay);
    std::seed_seq seq{static_cast<std::uint32_t>(tc.seed), static_cast<std::uint32_t>(tc.seed >> 32), 0x7472u};
    rng.seed(seq);
  }

  const fs::path metrics_path = out_dir / tc.metrics_file;
  std::ofstream metrics(metrics_path, options.resume ? std::ios::app : std::ios::trunc);
  DS_CHECK(metrics, "io", "cannot write metrics log '" + metrics_path.string() + "'");

  auto checkpoint = [&](const fs::path& path) {
    std::ostringstream os;
    os << rng;
    state.rng_state = os.str();
    save_checkpoint(path, state, config);
    return path;
  };

  fs::path last;
  while (state.step < total) {
    if (options.max_steps && state.step >= *options.max_steps) break;
    const TrainingBatch batch = compose_batch(*pool, rng, config);
    const double lr = schedule.lr(state.step);
    StepMetrics m = train_step(state.model, batch, state.optimizer, config, lr);
    m.step = state.step;
    m.epoch = static_cast<int>(state.step / iters);
    const json line = {{"step", m.step},         {"epoch", m.epoch},       {"lr", m.lr},
                       {"loss_total", m.loss_total}, {"loss_lpg", m.loss_lpg}, {"loss_cls", m.loss_cls},
                       {"loss_supcon", m.loss_supcon}, {"grad_norm", m.grad_norm}};
    metrics << line.dump() << '\n';
    metrics.flush();
    ++state.step;
    if (state.step % iters == 0) {
      state.epoch = static_cast<int>(state.step / iters);
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", state.epoch);
      last = checkpoint(out_dir / name);
    }
  }
  if (last.empty() || state.step % iters != 0) last = checkpoint(out_dir / "latest.ckpt");
  return last;
}

}  // namespace deepshield
