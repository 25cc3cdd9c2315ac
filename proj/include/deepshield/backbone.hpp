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

#include <string>
#include <vector>

#include "deepshield/data.hpp"

namespace deepshield {

/// How the class token passes through the adapter's temporal convolution.
enum class AdapterClsMode {
  Bypass,    ///< centre tap only (1x1x1)
  Temporal,  ///< 3-tap temporal mixing, class token treated as a 1x1 grid
};

struct EncoderConfig {
  int image_size = 224;
  int patch_size = 16;
  int embed_dim = 768;
  int depth = 12;
  int num_heads = 12;
  int mlp_ratio = 4;
  int adapter_width = 384;
  int num_frames = 12;
  AdapterClsMode adapter_cls_mode = AdapterClsMode::Temporal;
  /// Freeze pretrained weights; only adapters, heads, and optionally layer norms train.
  bool freeze_backbone = true;
  bool train_layernorm = false;
  std::string pretrained_weights;

  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int tokens_per_frame() const { return num_patches() + 1; }
  void validate() const;

  /// ViT-B/16 geometry.
  static EncoderConfig full();
  /// Desk-scale geometry: 64 px, patch 8, C=128, depth 4.
  static EncoderConfig toy();
};

enum class ParamGroup { Backbone, LayerNorm, Adapter, Head };

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  ParamGroup group = ParamGroup::Backbone;
  bool trainable = true;
};

/// Ordered named tensors with matching gradient buffers.
template <typename Scalar>
class ParameterStore {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, ParamGroup group);

  Parameter<Scalar>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Scalar>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Index of `name`, or size() when absent.
  std::size_t find(const std::string& name) const;
  void zero_grad();
  std::size_t count(bool trainable_only) const;

 private:
  std::vector<Parameter<Scalar>> params_;
};

template <typename Scalar>
struct ClipFeatures {
  Matrix<Scalar> class_embeddings;  ///< T x C
  Matrix<Scalar> patch_embeddings;  ///< (T*P) x C, frame-major
};

/// Standalone ST-Adapter weights: down (d x r), conv (3 x r taps t-1, t, t+1), up (r x d).
template <typename Scalar>
struct StAdapterWeights {
  Matrix<Scalar> down, down_bias;
  Matrix<Scalar> conv, conv_bias;
  Matrix<Scalar> up, up_bias;

  static StAdapterWeights random(int dim, int width, Rng& rng, double scale = 0.1);
};

/// X + GELU(DWConv3D(X W_down)) W_up over a (frames * tokens_per_frame) x d token matrix.
/// Token 0 of each frame is the class token; the rest form a square grid.
template <typename Scalar>
Matrix<Scalar> st_adapter(const Matrix<Scalar>& tokens, const StAdapterWeights<Scalar>& weights, int frames,
                          AdapterClsMode cls_mode = AdapterClsMode::Temporal);

namespace detail {

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> xhat;
  Vector<Scalar> rstd;
};

template <typename Scalar>
struct AdapterCache {
  Matrix<Scalar> input, down, conv, act;
};

template <typename Scalar>
struct AttentionCache {
  Matrix<Scalar> input, qkv, context;
  std::vector<Matrix<Scalar>> probs;  ///< frames * heads softmax matrices
};

template <typename Scalar>
struct MlpCache {
  Matrix<Scalar> input, hidden, act;
};

template <typename Scalar>
struct BlockCache {
  AdapterCache<Scalar> adapter_attn, adapter_mlp;
  LayerNormCache<Scalar> ln1, ln2;
  AttentionCache<Scalar> attn;
  MlpCache<Scalar> mlp;
};

}  // namespace detail

/// Activations retained by a forward pass for the backward pass.
template <typename Scalar>
struct EncoderCache {
  Matrix<Scalar> patches;
  detail::LayerNormCache<Scalar> ln_pre, ln_post;
  std::vector<detail::BlockCache<Scalar>> blocks;
};

enum class Head { Patch, Clip };

/// Positions of each named tensor inside a detector's ParameterStore.
struct DetectorLayout {
  struct Adapter {
    std::size_t down, down_bias, conv, conv_bias, up, up_bias;
  };
  struct Block {
    Adapter adapter_attn, adapter_mlp;
    std::size_t ln1_w, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
    std::size_t ln2_w, ln2_b, fc_w, fc_b, fc2_w, fc2_b;
  };
  std::size_t patch_embed, class_token, pos_embed, ln_pre_w, ln_pre_b, ln_post_w, ln_post_b;
  std::size_t patch_head_w, patch_head_b, clip_head_w, clip_head_b;
  std::vector<Block> blocks;
};

/// ViT video encoder with ST-Adapters plus the patch and clip binary heads.
template <typename Scalar>
class Detector {
 public:
  Detector() = default;
  Detector(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  ParameterStore<Scalar>& params() { return params_; }
  const ParameterStore<Scalar>& params() const { return params_; }

  ClipFeatures<Scalar> encode(const VideoClip& clip) const;
  ClipFeatures<Scalar> encode(const VideoClip& clip, EncoderCache<Scalar>& cache) const;
  /// Accumulates parameter gradients for the given feature gradients.
  void encode_backward(const EncoderCache<Scalar>& cache, const Matrix<Scalar>& d_class,
                       const Matrix<Scalar>& d_patch);

  /// Fake-class probability per row of `features` (N x C).
  Vector<Scalar> head_probs(Head head, const Matrix<Scalar>& features) const;
  /// Accumulates head gradients; returns d features.
  Matrix<Scalar> head_backward(Head head, const Matrix<Scalar>& features, const Vector<Scalar>& d_probs);
  Scalar classify(const RowVector<Scalar>& feature, Head head) const;

  /// Re-applies the freeze policy to the trainable flags.
  void apply_freeze_policy();
  double trainable_fraction() const;

  template <typename Other>
  Detector<Other> cast() const {
    Detector<Other> out;
    out.config_ = config_;
    out.index_ = index_;
    for (const auto& p : params_) {
      const auto i = out.params_.add(p.name, p.value.rows(), p.value.cols(), p.group);
      out.params_[i].value = p.value.template cast<Other>();
      out.params_[i].trainable = p.trainable;
    }
    return out;
  }

 private:
  template <typename>
  friend class Detector;

  EncoderConfig config_;
  ParameterStore<Scalar> params_;
  DetectorLayout index_{};
};

/// Fake probability from a 2-logit softmax.
template <typename Scalar>
Scalar softmax_fake_probability(Scalar logit_real, Scalar logit_fake) {
  return Scalar(1) / (Scalar(1) + std::exp(logit_real - logit_fake));
}

extern template class Detector<float>;
extern template class Detector<double>;

}  // namespace deepshield
