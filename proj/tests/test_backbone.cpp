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

#include <gtest/gtest.h>

#include <cmath>

#include "deepshield/backbone.hpp"
#include "test_support.hpp"

namespace deepshield {
namespace {

using testing::relative_error;
using testing::tiny_encoder;

Matrix<double> random_tokens(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Frames of `tokens_per_frame` rows that differ between a and b.
std::vector<int> changed_frames(const Matrix<double>& a, const Matrix<double>& b, int frames, int tokens_per_frame) {
  std::vector<int> out;
  for (int t = 0; t < frames; ++t)
    if (a.middleRows(t * tokens_per_frame, tokens_per_frame) != b.middleRows(t * tokens_per_frame, tokens_per_frame))
      out.push_back(t);
  return out;
}

// Gives every parameter a nonzero value so gradients reach all of them.
template <typename S>
void randomize(Detector<S>& model, Rng& rng, double scale = 0.1) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& p : model.params())
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += static_cast<S>(n(rng));
}

TEST(StAdapter, ZeroUpProjectionIsIdentity) {
  Rng rng(1);
  auto w = StAdapterWeights<double>::random(16, 8, rng);
  w.up.setZero();
  w.up_bias.setZero();
  const Matrix<double> x = random_tokens(4 * 5, 16, rng);  // 4 frames, 2x2 grid + class token
  EXPECT_EQ(st_adapter(x, w, 4), x);
  EXPECT_EQ(st_adapter(x, w, 4, AdapterClsMode::Bypass), x);
}

TEST(StAdapter, ShapeIsPreserved) {
  Rng rng(2);
  const auto w = StAdapterWeights<double>::random(12, 4, rng);
  const Matrix<double> x = random_tokens(3 * 10, 12, rng);
  const Matrix<double> y = st_adapter(x, w, 3);
  EXPECT_EQ(y.rows(), 30);
  EXPECT_EQ(y.cols(), 12);
  EXPECT_THROW(st_adapter(x, w, 7), Error);
}

TEST(StAdapter, TemporalReceptiveFieldIsOneFrame) {
  Rng rng(3);
  const int frames = 6, tokens = 5;
  const auto w = StAdapterWeights<double>::random(8, 4, rng, 0.5);
  const Matrix<double> x = random_tokens(frames * tokens, 8, rng);
  const Matrix<double> base = st_adapter(x, w, frames);
  for (int k = 0; k < frames; ++k) {
    Matrix<double> x2 = x;
    x2.middleRows(k * tokens, tokens).array() += 1.0;
    std::vector<int> expect;
    for (int t = std::max(0, k - 1); t <= std::min(frames - 1, k + 1); ++t) expect.push_back(t);
    EXPECT_EQ(changed_frames(base, st_adapter(x2, w, frames), frames, tokens), expect) << "perturbed frame " << k;
  }
  // A change at frame 2 cannot reach frame 4 (two frames away).
  Matrix<double> x3 = x;
  x3.middleRows(2 * tokens, tokens).array() -= 2.0;
  const Matrix<double> y3 = st_adapter(x3, w, frames);
  EXPECT_EQ(y3.middleRows(4 * tokens, tokens), base.middleRows(4 * tokens, tokens));
  EXPECT_EQ(y3.middleRows(0, tokens), base.middleRows(0, tokens));
}

TEST(StAdapter, BypassKeepsClassTokenLocal) {
  Rng rng(4);
  const int frames = 4, tokens = 5;
  const auto w = StAdapterWeights<double>::random(8, 4, rng, 0.5);
  const Matrix<double> x = random_tokens(frames * tokens, 8, rng);
  Matrix<double> x2 = x;
  x2.row(1 * tokens).array() += 1.0;  // class token of frame 1
  EXPECT_EQ(changed_frames(st_adapter(x, w, frames, AdapterClsMode::Bypass),
                           st_adapter(x2, w, frames, AdapterClsMode::Bypass), frames, tokens),
            std::vector<int>{1});
  EXPECT_EQ(changed_frames(st_adapter(x, w, frames), st_adapter(x2, w, frames), frames, tokens),
            (std::vector<int>{0, 1, 2}));
}

TEST(EncoderConfig, Geometry) {
  const auto full = EncoderConfig::full();
  EXPECT_EQ(full.grid(), 14);
  EXPECT_EQ(full.num_patches(), 196);
  EXPECT_EQ(full.tokens_per_frame(), 197);
  EXPECT_EQ(full.embed_dim, 768);
  EXPECT_EQ(full.num_frames, 12);
  EXPECT_NO_THROW(full.validate());
  auto bad = full;
  bad.image_size = 220;
  EXPECT_THROW(bad.validate(), Error);
  bad = full;
  bad.num_heads = 7;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Detector, EncodeShapes) {
  Rng rng(5);
  auto cfg = tiny_encoder();
  Detector<float> model(cfg, 1);
  const auto f = model.encode(testing::random_clip(3, 16, rng));
  EXPECT_EQ(f.class_embeddings.rows(), 3);
  EXPECT_EQ(f.class_embeddings.cols(), 16);
  EXPECT_EQ(f.patch_embeddings.rows(), 3 * 4);
  EXPECT_EQ(f.patch_embeddings.cols(), 16);
  EXPECT_THROW(model.encode(testing::random_clip(2, 16, rng)), Error);
  EXPECT_THROW(model.encode(testing::random_clip(3, 24, rng)), Error);
}

TEST(Detector, SameSeedSameWeightsSameOutput) {
  Rng rng(6);
  const VideoClip clip = testing::random_clip(3, 16, rng);
  Detector<float> a(tiny_encoder(), 9), b(tiny_encoder(), 9), c(tiny_encoder(), 10);
  ASSERT_EQ(a.params().size(), b.params().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].value, b.params()[i].value);
    any_diff |= a.params()[i].value != c.params()[i].value;
  }
  EXPECT_TRUE(any_diff);
  EXPECT_EQ(a.encode(clip).class_embeddings, b.encode(clip).class_embeddings);
  EXPECT_EQ(a.encode(clip).patch_embeddings, a.encode(clip).patch_embeddings);
}

TEST(Detector, FreshAdaptersAndHeadsAreInert) {
  Detector<double> model(tiny_encoder(), 3);
  for (const auto& p : model.params()) {
    if (p.name.find(".up.") != std::string::npos || p.group == ParamGroup::Head) {
      EXPECT_TRUE(p.value.isZero()) << p.name;
    }
  }
  // Identical frames give identical class embeddings when the adapters are inert.
  Rng rng(7);
  const Frame f = testing::random_frame(16, 16, rng);
  VideoClip clip;
  clip.frames = {f, f, f};
  const auto feats = model.encode(clip);
  EXPECT_LT((feats.class_embeddings.row(0) - feats.class_embeddings.row(2)).norm(), 1e-12);
  EXPECT_DOUBLE_EQ(model.classify(feats.class_embeddings.row(1), Head::Clip), 0.5);
  EXPECT_DOUBLE_EQ(model.classify(feats.class_embeddings.row(1), Head::Patch), 0.5);
}

TEST(Detector, FrameOrderMattersOnlyThroughAdapters) {
  Rng rng(8);
  VideoClip clip = testing::random_clip(3, 16, rng);
  VideoClip shuffled = clip;
  std::swap(shuffled.frames[0], shuffled.frames[2]);

  Detector<double> fresh(tiny_encoder(), 4);
  const auto a = fresh.encode(clip).class_embeddings;
  const auto b = fresh.encode(shuffled).class_embeddings;
  EXPECT_LT((a.row(0) - b.row(2)).norm(), 1e-12);  // a pure permutation

  Detector<double> trained(tiny_encoder(), 4);
  randomize(trained, rng);
  const auto c = trained.encode(clip).class_embeddings;
  const auto d = trained.encode(shuffled).class_embeddings;
  EXPECT_GT((c.row(0) - d.row(2)).norm(), 1e-6);
  EXPECT_GT((c.colwise().mean() - d.colwise().mean()).norm(), 1e-6);
}

TEST(Detector, ClassifierProbability) {
  EXPECT_DOUBLE_EQ(softmax_fake_probability(0.0, 0.0), 0.5);
  EXPECT_NEAR(softmax_fake_probability(0.0, std::log(3.0)), 0.75, 1e-12);

  Detector<double> model(tiny_encoder(), 1);
  auto& w = model.params()[model.params().find("clip_head.weight")].value;
  auto& b = model.params()[model.params().find("clip_head.bias")].value;
  w.setZero();
  b(0, 0) = 0.0;
  b(0, 1) = std::log(3.0);
  EXPECT_NEAR(model.classify(RowVector<double>::Ones(16), Head::Clip), 0.75, 1e-12);
  RowVector<double> nan_feature = RowVector<double>::Zero(16);
  nan_feature(3) = std::nan("");
  EXPECT_THROW(model.classify(nan_feature, Head::Clip), Error);
}

TEST(Detector, FreezePolicy) {
  auto cfg = EncoderConfig::toy();
  cfg.freeze_backbone = true;
  Detector<float> model(cfg, 1);
  std::size_t trainable = 0, total = 0;
  for (const auto& p : model.params()) {
    const bool expect = p.group == ParamGroup::Adapter || p.group == ParamGroup::Head;
    EXPECT_EQ(p.trainable, expect) << p.name;
    total += p.value.size();
    trainable += expect ? p.value.size() : 0;
  }
  EXPECT_DOUBLE_EQ(model.trainable_fraction(), static_cast<double>(trainable) / static_cast<double>(total));
  EXPECT_GT(model.trainable_fraction(), 0.0);
  EXPECT_LT(model.trainable_fraction(), 0.5);

  cfg.train_layernorm = true;
  Detector<float> with_ln(cfg, 1);
  for (const auto& p : with_ln.params())
    if (p.group == ParamGroup::LayerNorm) {
      EXPECT_TRUE(p.trainable) << p.name;
    }
  EXPECT_GT(with_ln.trainable_fraction(), model.trainable_fraction());

  cfg.freeze_backbone = false;
  Detector<float> all(cfg, 1);
  EXPECT_DOUBLE_EQ(all.trainable_fraction(), 1.0);
}

TEST(Detector, FloatCastMatchesDouble) {
  Rng rng(11);
  Detector<double> d(tiny_encoder(), 2);
  randomize(d, rng);
  const Detector<float> f = d.cast<float>();
  const VideoClip clip = testing::random_clip(3, 16, rng);
  const Matrix<double> a = d.encode(clip).class_embeddings;
  const Matrix<double> b = f.encode(clip).class_embeddings.cast<double>();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-4);
}

class EncodeBackward : public ::testing::TestWithParam<AdapterClsMode> {};

TEST_P(EncodeBackward, MatchesFiniteDifferences) {
  auto cfg = tiny_encoder();
  cfg.adapter_cls_mode = GetParam();
  Rng rng(12);
  Detector<double> model(cfg, 5);
  randomize(model, rng);
  const VideoClip clip = testing::random_clip(3, 16, rng);
  const Matrix<double> wc = random_tokens(3, 16, rng);
  const Matrix<double> wp = random_tokens(12, 16, rng);
  auto objective = [&] {
    const auto f = model.encode(clip);
    return (f.class_embeddings.array() * wc.array()).sum() + (f.patch_embeddings.array() * wp.array()).sum();
  };

  EncoderCache<double> cache;
  model.encode(clip, cache);
  model.params().zero_grad();
  model.encode_backward(cache, wc, wp);

  const double h = 1e-5;
  std::uniform_int_distribution<int> pick(0, 1 << 30);
  int checked = 0;
  for (auto& p : model.params()) {
    if (p.group == ParamGroup::Head) continue;  // heads are outside the encoder
    for (int k = 0; k < 3; ++k) {
      const Eigen::Index i = pick(rng) % p.value.size();
      // Softmax ignores a shift shared by every key, so the key bias has an exactly zero gradient.
      const Eigen::Index dim = cfg.embed_dim;
      if (p.name.ends_with("in_proj.bias") && i >= dim && i < 2 * dim) {
        EXPECT_NEAR(p.grad.data()[i], 0.0, 1e-12) << p.name << "[" << i << "]";
        continue;
      }
      const double saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      const double up = objective();
      p.value.data()[i] = saved - h;
      const double down = objective();
      p.value.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      EXPECT_LT(relative_error(p.grad.data()[i], fd, 1e-6), 1e-5) << p.name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

INSTANTIATE_TEST_SUITE_P(ClsModes, EncodeBackward,
                         ::testing::Values(AdapterClsMode::Temporal, AdapterClsMode::Bypass));

TEST(Detector, FrozenParametersReceiveNoGradient) {
  auto cfg = tiny_encoder();
  cfg.freeze_backbone = true;
  Rng rng(13);
  Detector<double> model(cfg, 5);
  randomize(model, rng);
  const VideoClip clip = testing::random_clip(3, 16, rng);
  EncoderCache<double> cache;
  model.encode(clip, cache);
  model.params().zero_grad();
  model.encode_backward(cache, random_tokens(3, 16, rng), random_tokens(12, 16, rng));
  for (const auto& p : model.params()) {
    if (!p.trainable) {
      EXPECT_TRUE(p.grad.isZero()) << p.name;
    }
    if (p.group == ParamGroup::Adapter) {
      EXPECT_FALSE(p.grad.isZero()) << p.name;
    }
  }
}

TEST(Detector, HeadBackwardMatchesFiniteDifferences) {
  Rng rng(14);
  Detector<double> model(tiny_encoder(), 5);
  randomize(model, rng);
  const Matrix<double> feats = random_tokens(5, 16, rng);
  Vector<double> dprobs(5);
  dprobs << 0.3, -1.0, 0.7, 0.2, -0.4;
  model.params().zero_grad();
  const Matrix<double> dfeat = model.head_backward(Head::Clip, feats, dprobs);
  auto objective = [&](const Matrix<double>& f) { return model.head_probs(Head::Clip, f).dot(dprobs); };
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < feats.size(); ++i) {
    Matrix<double> a = feats, b = feats;
    a.data()[i] += h;
    b.data()[i] -= h;
    EXPECT_LT(relative_error(dfeat.data()[i], (objective(a) - objective(b)) / (2 * h), 1e-8), 1e-6);
  }
  auto& w = model.params()[model.params().find("clip_head.weight")];
  for (Eigen::Index i = 0; i < w.value.size(); ++i) {
    const double saved = w.value.data()[i];
    w.value.data()[i] = saved + h;
    const double up = objective(feats);
    w.value.data()[i] = saved - h;
    const double down = objective(feats);
    w.value.data()[i] = saved;
    EXPECT_LT(relative_error(w.grad.data()[i], (up - down) / (2 * h), 1e-8), 1e-6);
  }
}

}  // namespace
}  // namespace deepshield
