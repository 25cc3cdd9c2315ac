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

#include "deepshield/backbone.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>

namespace deepshield {

void EncoderConfig::validate() const {
  DS_CHECK(image_size > 0 && patch_size > 0 && image_size % patch_size == 0, "config_mismatch",
           "image_size must be a positive multiple of patch_size");
  DS_CHECK(embed_dim > 0 && num_heads > 0 && embed_dim % num_heads == 0, "config_mismatch",
           "embed_dim must be divisible by num_heads");
  DS_CHECK(adapter_width > 0 && adapter_width < embed_dim, "config_mismatch",
           "adapter bottleneck width must be below embed_dim");
  DS_CHECK(depth >= 1 && mlp_ratio >= 1 && num_frames >= 1, "config_mismatch", "depth, mlp_ratio, num_frames must be >= 1");
}

EncoderConfig EncoderConfig::full() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.image_size = 64;
  c.patch_size = 8;
  c.embed_dim = 128;
  c.depth = 4;
  c.num_heads = 4;
  c.adapter_width = 64;
  c.num_frames = 6;
  return c;
}

// ---------------------------------------------------------------------------
// ParameterStore

template <typename Scalar>
std::size_t ParameterStore<Scalar>::add(std::string name, Eigen::Index rows, Eigen::Index cols, ParamGroup group) {
  Parameter<Scalar> p;
  p.name = std::move(name);
  p.value = Matrix<Scalar>::Zero(rows, cols);
  p.grad = Matrix<Scalar>::Zero(rows, cols);
  p.group = group;
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

template <typename Scalar>
std::size_t ParameterStore<Scalar>::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return params_.size();
}

template <typename Scalar>
void ParameterStore<Scalar>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename Scalar>
std::size_t ParameterStore<Scalar>::count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || p.trainable) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

// ---------------------------------------------------------------------------
// Layer kernels

namespace {

template <typename S>
using Mat = Matrix<S>;

constexpr double kLayerNormEps = 1e-5;

template <typename S>
Mat<S> gelu(const Mat<S>& x) {
  return (S(0.5) * x.array() * (S(1) + (x.array() * S(M_SQRT1_2)).erf())).matrix();
}

template <typename S>
Mat<S> gelu_derivative(const Mat<S>& x) {
  const S inv_sqrt_2pi = S(0.3989422804014327);
  return (S(0.5) * (S(1) + (x.array() * S(M_SQRT1_2)).erf()) +
          x.array() * inv_sqrt_2pi * (S(-0.5) * x.array().square()).exp())
      .matrix();
}

template <typename S>
Mat<S> linear(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
  Mat<S> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

/// Accumulates dW, db when given; returns dx when `need_input_grad`.
template <typename S>
Mat<S> linear_backward(const Mat<S>& dy, const Mat<S>& x, const Mat<S>& w, Mat<S>* dw, Mat<S>* db,
                       bool need_input_grad = true) {
  if (dw) dw->noalias() += x.transpose() * dy;
  if (db) *db += dy.colwise().sum();
  if (!need_input_grad) return {};
  return dy * w.transpose();
}

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b, detail::LayerNormCache<S>* cache) {
  const Vector<S> mean = x.rowwise().mean();
  Mat<S> xhat = x.colwise() - mean;
  const Vector<S> rstd = (xhat.array().square().rowwise().mean() + S(kLayerNormEps)).rsqrt();
  xhat = xhat.array().colwise() * rstd.array();
  Mat<S> y = (xhat.array().rowwise() * w.row(0).array()).rowwise() + b.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = rstd;
  }
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const detail::LayerNormCache<S>& c, const Mat<S>& w, Mat<S>* dw,
                           Mat<S>* db) {
  if (dw) *dw += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  if (db) *db += dy.colwise().sum();
  const Mat<S> dxhat = dy.array().rowwise() * w.row(0).array();
  const Vector<S> m1 = dxhat.rowwise().mean();
  const Vector<S> m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Mat<S> dx = (dxhat.colwise() - m1).array() - c.xhat.array().colwise() * m2.array();
  return dx.array().colwise() * c.rstd.array();
}

template <typename S>
struct AdapterRefs {
  const Mat<S>& down;
  const Mat<S>& down_bias;
  const Mat<S>& conv;
  const Mat<S>& conv_bias;
  const Mat<S>& up;
  const Mat<S>& up_bias;
};

template <typename S>
struct AdapterGrads {
  Mat<S>* down = nullptr;
  Mat<S>* down_bias = nullptr;
  Mat<S>* conv = nullptr;
  Mat<S>* conv_bias = nullptr;
  Mat<S>* up = nullptr;
  Mat<S>* up_bias = nullptr;
};

// Depthwise temporal convolution with taps (t-1, t, t+1) and zero padding.
template <typename S>
Mat<S> temporal_conv(const Mat<S>& z, const Mat<S>& conv, const Mat<S>& bias, int frames, AdapterClsMode mode) {
  const Eigen::Index tokens = z.rows() / frames;
  Mat<S> y(z.rows(), z.cols());
  for (int t = 0; t < frames; ++t) {
    auto yt = y.middleRows(t * tokens, tokens);
    yt = z.middleRows(t * tokens, tokens).array().rowwise() * conv.row(1).array();
    if (t > 0) yt.array() += z.middleRows((t - 1) * tokens, tokens).array().rowwise() * conv.row(0).array();
    if (t + 1 < frames) yt.array() += z.middleRows((t + 1) * tokens, tokens).array().rowwise() * conv.row(2).array();
    yt.rowwise() += bias.row(0);
    if (mode == AdapterClsMode::Bypass) {
      y.row(t * tokens) = z.row(t * tokens).cwiseProduct(conv.row(1)) + bias.row(0);
    }
  }
  return y;
}

template <typename S>
Mat<S> adapter_forward(const Mat<S>& x, const AdapterRefs<S>& w, int frames, AdapterClsMode mode,
                       detail::AdapterCache<S>* cache) {
  DS_CHECK(x.rows() % frames == 0 && x.cols() == w.down.rows() && w.conv.rows() == 3 &&
               w.conv.cols() == w.down.cols() && w.up.rows() == w.down.cols() && w.up.cols() == x.cols(),
           "shape_mismatch", "adapter weights do not match the token tensor");
  Mat<S> z = linear(x, w.down, w.down_bias);
  Mat<S> y = temporal_conv(z, w.conv, w.conv_bias, frames, mode);
  Mat<S> g = gelu(y);
  Mat<S> out = x + linear(g, w.up, w.up_bias);
  if (cache) {
    cache->input = x;
    cache->down = std::move(z);
    cache->conv = std::move(y);
    cache->act = std::move(g);
  }
  return out;
}

template <typename S>
Mat<S> adapter_backward(const Mat<S>& dout, const detail::AdapterCache<S>& c, const AdapterRefs<S>& w,
                        const AdapterGrads<S>& g, int frames, AdapterClsMode mode) {
  const Eigen::Index tokens = dout.rows() / frames;
  const Mat<S> dact = linear_backward(dout, c.act, w.up, g.up, g.up_bias);
  const Mat<S> dy = dact.array() * gelu_derivative(c.conv).array();
  if (g.conv_bias) *g.conv_bias += dy.colwise().sum();
  Mat<S> dy_off = dy;
  if (mode == AdapterClsMode::Bypass)
    for (int t = 0; t < frames; ++t) dy_off.row(t * tokens).setZero();

  Mat<S> dz = dy.array().rowwise() * w.conv.row(1).array();
  if (g.conv) g.conv->row(1) += (dy.array() * c.down.array()).colwise().sum().matrix();
  for (int t = 0; t < frames; ++t) {
    const auto dyt = dy_off.middleRows(t * tokens, tokens);
    if (t > 0) {
      const auto prev = c.down.middleRows((t - 1) * tokens, tokens);
      if (g.conv) g.conv->row(0) += (dyt.array() * prev.array()).colwise().sum().matrix();
      dz.middleRows((t - 1) * tokens, tokens).array() += dyt.array().rowwise() * w.conv.row(0).array();
    }
    if (t + 1 < frames) {
      const auto next = c.down.middleRows((t + 1) * tokens, tokens);
      if (g.conv) g.conv->row(2) += (dyt.array() * next.array()).colwise().sum().matrix();
      dz.middleRows((t + 1) * tokens, tokens).array() += dyt.array().rowwise() * w.conv.row(2).array();
    }
  }
  Mat<S> dx = linear_backward(dz, c.input, w.down, g.down, g.down_bias);
  dx += dout;
  return dx;
}

template <typename S>
void softmax_rows(Mat<S>& m) {
  const Vector<S> mx = m.rowwise().maxCoeff();
  m = (m.colwise() - mx).array().exp();
  const Vector<S> sum = m.rowwise().sum();
  m.array().colwise() /= sum.array();
}

}  // namespace

template <typename Scalar>
StAdapterWeights<Scalar> StAdapterWeights<Scalar>::random(int dim, int width, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  auto fill = [&](Eigen::Index r, Eigen::Index c) {
    Matrix<Scalar> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
    return m;
  };
  StAdapterWeights w;
  w.down = fill(dim, width);
  w.down_bias = fill(1, width);
  w.conv = fill(3, width);
  w.conv_bias = fill(1, width);
  w.up = fill(width, dim);
  w.up_bias = fill(1, dim);
  return w;
}

template <typename Scalar>
Matrix<Scalar> st_adapter(const Matrix<Scalar>& tokens, const StAdapterWeights<Scalar>& w, int frames,
                          AdapterClsMode cls_mode) {
  DS_CHECK(frames > 0 && tokens.rows() % frames == 0, "shape_mismatch", "token rows must be a multiple of frames");
  const AdapterRefs<Scalar> refs{w.down, w.down_bias, w.conv, w.conv_bias, w.up, w.up_bias};
  return adapter_forward(tokens, refs, frames, cls_mode, static_cast<detail::AdapterCache<Scalar>*>(nullptr));
}

template struct StAdapterWeights<float>;
template struct StAdapterWeights<double>;
template Matrix<float> st_adapter(const Matrix<float>&, const StAdapterWeights<float>&, int, AdapterClsMode);
template Matrix<double> st_adapter(const Matrix<double>&, const StAdapterWeights<double>&, int, AdapterClsMode);

// ---------------------------------------------------------------------------
// Detector

namespace {

constexpr float kClipMean[3] = {0.48145466f, 0.4578275f, 0.40821073f};
constexpr float kClipStd[3] = {0.26862954f, 0.26130258f, 0.27577711f};

}  // namespace

template <typename Scalar>
Detector<Scalar>::Detector(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int c = config_.embed_dim, r = config_.adapter_width, p = config_.patch_size;
  const int hidden = c * config_.mlp_ratio;
  auto& ps = params_;
  auto& ix = index_;
  ix.patch_embed = ps.add("conv1.weight", 3 * p * p, c, ParamGroup::Backbone);
  ix.class_token = ps.add("class_embedding", 1, c, ParamGroup::Backbone);
  ix.pos_embed = ps.add("positional_embedding", config_.tokens_per_frame(), c, ParamGroup::Backbone);
  ix.ln_pre_w = ps.add("ln_pre.weight", 1, c, ParamGroup::LayerNorm);
  ix.ln_pre_b = ps.add("ln_pre.bias", 1, c, ParamGroup::LayerNorm);
  auto add_adapter = [&](const std::string& prefix) {
    DetectorLayout::Adapter a;
    a.down = ps.add(prefix + ".down.weight", c, r, ParamGroup::Adapter);
    a.down_bias = ps.add(prefix + ".down.bias", 1, r, ParamGroup::Adapter);
    a.conv = ps.add(prefix + ".conv.weight", 3, r, ParamGroup::Adapter);
    a.conv_bias = ps.add(prefix + ".conv.bias", 1, r, ParamGroup::Adapter);
    a.up = ps.add(prefix + ".up.weight", r, c, ParamGroup::Adapter);
    a.up_bias = ps.add(prefix + ".up.bias", 1, c, ParamGroup::Adapter);
    return a;
  };
  for (int b = 0; b < config_.depth; ++b) {
    const std::string pre = "blocks." + std::to_string(b);
    DetectorLayout::Block blk;
    blk.adapter_attn = add_adapter(pre + ".adapter_attn");
    blk.ln1_w = ps.add(pre + ".ln_1.weight", 1, c, ParamGroup::LayerNorm);
    blk.ln1_b = ps.add(pre + ".ln_1.bias", 1, c, ParamGroup::LayerNorm);
    blk.qkv_w = ps.add(pre + ".attn.in_proj.weight", c, 3 * c, ParamGroup::Backbone);
    blk.qkv_b = ps.add(pre + ".attn.in_proj.bias", 1, 3 * c, ParamGroup::Backbone);
    blk.proj_w = ps.add(pre + ".attn.out_proj.weight", c, c, ParamGroup::Backbone);
    blk.proj_b = ps.add(pre + ".attn.out_proj.bias", 1, c, ParamGroup::Backbone);
    blk.adapter_mlp = add_adapter(pre + ".adapter_mlp");
    blk.ln2_w = ps.add(pre + ".ln_2.weight", 1, c, ParamGroup::LayerNorm);
    blk.ln2_b = ps.add(pre + ".ln_2.bias", 1, c, ParamGroup::LayerNorm);
    blk.fc_w = ps.add(pre + ".mlp.c_fc.weight", c, hidden, ParamGroup::Backbone);
    blk.fc_b = ps.add(pre + ".mlp.c_fc.bias", 1, hidden, ParamGroup::Backbone);
    blk.fc2_w = ps.add(pre + ".mlp.c_proj.weight", hidden, c, ParamGroup::Backbone);
    blk.fc2_b = ps.add(pre + ".mlp.c_proj.bias", 1, c, ParamGroup::Backbone);
    ix.blocks.push_back(blk);
  }
  ix.ln_post_w = ps.add("ln_post.weight", 1, c, ParamGroup::LayerNorm);
  ix.ln_post_b = ps.add("ln_post.bias", 1, c, ParamGroup::LayerNorm);
  ix.patch_head_w = ps.add("patch_head.weight", c, 2, ParamGroup::Head);
  ix.patch_head_b = ps.add("patch_head.bias", 1, 2, ParamGroup::Head);
  ix.clip_head_w = ps.add("clip_head.weight", c, 2, ParamGroup::Head);
  ix.clip_head_b = ps.add("clip_head.bias", 1, 2, ParamGroup::Head);

  // Transformer weights ~ N(0, 0.02); layer norms at identity; adapter up-projections and
  // classifier heads start at zero so step 0 reproduces the (pretrained) backbone.
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto fill_normal = [&](std::size_t i) {
    auto& m = params_[i].value;
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(normal(rng));
  };
  auto fill_uniform = [&](std::size_t i, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    auto& m = params_[i].value;
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(u(rng));
  };
  fill_normal(ix.patch_embed);
  fill_normal(ix.class_token);
  fill_normal(ix.pos_embed);
  params_[ix.ln_pre_w].value.setOnes();
  params_[ix.ln_post_w].value.setOnes();
  for (const auto& blk : ix.blocks) {
    params_[blk.ln1_w].value.setOnes();
    params_[blk.ln2_w].value.setOnes();
    fill_normal(blk.qkv_w);
    fill_normal(blk.proj_w);
    fill_normal(blk.fc_w);
    fill_normal(blk.fc2_w);
    for (const auto* a : {&blk.adapter_attn, &blk.adapter_mlp}) {
      fill_uniform(a->down, 1.0 / std::sqrt(static_cast<double>(c)));
      fill_uniform(a->conv, 1.0 / std::sqrt(3.0));
    }
  }
  apply_freeze_policy();
}

template <typename Scalar>
void Detector<Scalar>::apply_freeze_policy() {
  for (auto& p : params_) {
    switch (p.group) {
      case ParamGroup::Backbone: p.trainable = !config_.freeze_backbone; break;
      case ParamGroup::LayerNorm: p.trainable = !config_.freeze_backbone || config_.train_layernorm; break;
      case ParamGroup::Adapter:
      case ParamGroup::Head: p.trainable = true; break;
    }
  }
}

template <typename Scalar>
double Detector<Scalar>::trainable_fraction() const {
  return static_cast<double>(params_.count(true)) / static_cast<double>(params_.count(false));
}

template <typename Scalar>
ClipFeatures<Scalar> Detector<Scalar>::encode(const VideoClip& clip) const {
  EncoderCache<Scalar> cache;
  return encode(clip, cache);
}

template <typename Scalar>
ClipFeatures<Scalar> Detector<Scalar>::encode(const VideoClip& clip, EncoderCache<Scalar>& cache) const {
  const int frames = config_.num_frames, size = config_.image_size, p = config_.patch_size, grid = config_.grid();
  const int patches = config_.num_patches(), tokens = config_.tokens_per_frame(), c = config_.embed_dim;
  DS_CHECK(clip.length() == frames, "config_mismatch",
           "clip has " + std::to_string(clip.length()) + " frames, encoder expects " + std::to_string(frames));
  for (const auto& f : clip.frames)
    DS_CHECK(f.height() == size && f.width() == size, "config_mismatch",
             "frame is " + std::to_string(f.height()) + "x" + std::to_string(f.width()) + ", encoder expects " +
                 std::to_string(size));

  cache.patches.resize(static_cast<Eigen::Index>(frames) * patches, 3 * p * p);
  for (int t = 0; t < frames; ++t)
    for (int gy = 0; gy < grid; ++gy)
      for (int gx = 0; gx < grid; ++gx) {
        auto row = cache.patches.row(static_cast<Eigen::Index>(t) * patches + gy * grid + gx);
        for (int ch = 0; ch < 3; ++ch) {
          const auto& plane = clip.frames[t].channels[ch];
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx)
              row(ch * p * p + dy * p + dx) =
                  static_cast<Scalar>((plane(gy * p + dy, gx * p + dx) - kClipMean[ch]) / kClipStd[ch]);
        }
      }

  const auto& ix = index_;
  const Matrix<Scalar> embedded = cache.patches * params_[ix.patch_embed].value;
  const auto& pos = params_[ix.pos_embed].value;
  Matrix<Scalar> x(static_cast<Eigen::Index>(frames) * tokens, c);
  for (int t = 0; t < frames; ++t) {
    x.row(t * tokens) = params_[ix.class_token].value.row(0) + pos.row(0);
    x.middleRows(t * tokens + 1, patches) = embedded.middleRows(t * patches, patches) + pos.bottomRows(patches);
  }
  x = layer_norm(x, params_[ix.ln_pre_w].value, params_[ix.ln_pre_b].value, &cache.ln_pre);

  const int heads = config_.num_heads, dh = c / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  cache.blocks.resize(ix.blocks.size());
  for (std::size_t b = 0; b < ix.blocks.size(); ++b) {
    const auto& blk = ix.blocks[b];
    auto& bc = cache.blocks[b];
    auto refs = [&](const DetectorLayout::Adapter& a) {
      return AdapterRefs<Scalar>{params_[a.down].value, params_[a.down_bias].value, params_[a.conv].value,
                                 params_[a.conv_bias].value, params_[a.up].value, params_[a.up_bias].value};
    };
    x = adapter_forward(x, refs(blk.adapter_attn), frames, config_.adapter_cls_mode, &bc.adapter_attn);

    // Spatial self-attention within each frame.
    auto& ac = bc.attn;
    ac.input = layer_norm(x, params_[blk.ln1_w].value, params_[blk.ln1_b].value, &bc.ln1);
    ac.qkv = linear(ac.input, params_[blk.qkv_w].value, params_[blk.qkv_b].value);
    ac.context.resize(x.rows(), c);
    ac.probs.resize(static_cast<std::size_t>(frames) * heads);
    for (int t = 0; t < frames; ++t)
      for (int h = 0; h < heads; ++h) {
        const auto q = ac.qkv.block(t * tokens, h * dh, tokens, dh);
        const auto k = ac.qkv.block(t * tokens, c + h * dh, tokens, dh);
        const auto v = ac.qkv.block(t * tokens, 2 * c + h * dh, tokens, dh);
        Matrix<Scalar> a = (q * k.transpose()) * scale;
        softmax_rows(a);
        ac.context.block(t * tokens, h * dh, tokens, dh).noalias() = a * v;
        ac.probs[static_cast<std::size_t>(t) * heads + h] = std::move(a);
      }
    x += linear(ac.context, params_[blk.proj_w].value, params_[blk.proj_b].value);

    x = adapter_forward(x, refs(blk.adapter_mlp), frames, config_.adapter_cls_mode, &bc.adapter_mlp);

    auto& mc = bc.mlp;
    mc.input = layer_norm(x, params_[blk.ln2_w].value, params_[blk.ln2_b].value, &bc.ln2);
    mc.hidden = linear(mc.input, params_[blk.fc_w].value, params_[blk.fc_b].value);
    mc.act = gelu(mc.hidden);
    x += linear(mc.act, params_[blk.fc2_w].value, params_[blk.fc2_b].value);
  }
  x = layer_norm(x, params_[ix.ln_post_w].value, params_[ix.ln_post_b].value, &cache.ln_post);

  ClipFeatures<Scalar> out;
  out.class_embeddings.resize(frames, c);
  out.patch_embeddings.resize(static_cast<Eigen::Index>(frames) * patches, c);
  for (int t = 0; t < frames; ++t) {
    out.class_embeddings.row(t) = x.row(t * tokens);
    out.patch_embeddings.middleRows(t * patches, patches) = x.middleRows(t * tokens + 1, patches);
  }
  return out;
}

template <typename Scalar>
void Detector<Scalar>::encode_backward(const EncoderCache<Scalar>& cache, const Matrix<Scalar>& d_class,
                                       const Matrix<Scalar>& d_patch) {
  const int frames = config_.num_frames, patches = config_.num_patches(), tokens = config_.tokens_per_frame();
  const int c = config_.embed_dim, heads = config_.num_heads, dh = c / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  DS_CHECK(d_class.rows() == frames && d_class.cols() == c && d_patch.rows() == frames * patches &&
               d_patch.cols() == c,
           "shape_mismatch", "feature gradients do not match the encoder output");
  DS_CHECK(cache.blocks.size() == index_.blocks.size(), "shape_mismatch", "encoder cache is incomplete");
  auto grad = [&](std::size_t i) -> Matrix<Scalar>* { return params_[i].trainable ? &params_[i].grad : nullptr; };
  const auto& ix = index_;

  Matrix<Scalar> dx(static_cast<Eigen::Index>(frames) * tokens, c);
  for (int t = 0; t < frames; ++t) {
    dx.row(t * tokens) = d_class.row(t);
    dx.middleRows(t * tokens + 1, patches) = d_patch.middleRows(t * patches, patches);
  }
  dx = layer_norm_backward(dx, cache.ln_post, params_[ix.ln_post_w].value, grad(ix.ln_post_w), grad(ix.ln_post_b));

  for (std::size_t b = ix.blocks.size(); b-- > 0;) {
    const auto& blk = ix.blocks[b];
    const auto& bc = cache.blocks[b];
    auto refs = [&](const DetectorLayout::Adapter& a) {
      return AdapterRefs<Scalar>{params_[a.down].value, params_[a.down_bias].value, params_[a.conv].value,
                                 params_[a.conv_bias].value, params_[a.up].value, params_[a.up_bias].value};
    };
    auto grads = [&](const DetectorLayout::Adapter& a) {
      return AdapterGrads<Scalar>{grad(a.down), grad(a.down_bias), grad(a.conv),
                                  grad(a.conv_bias), grad(a.up), grad(a.up_bias)};
    };

    // MLP residual branch.
    const auto& mc = bc.mlp;
    Matrix<Scalar> d_act = linear_backward(dx, mc.act, params_[blk.fc2_w].value, grad(blk.fc2_w), grad(blk.fc2_b));
    Matrix<Scalar> d_hidden = d_act.array() * gelu_derivative(mc.hidden).array();
    Matrix<Scalar> d_ln2 = linear_backward(d_hidden, mc.input, params_[blk.fc_w].value, grad(blk.fc_w), grad(blk.fc_b));
    dx += layer_norm_backward(d_ln2, bc.ln2, params_[blk.ln2_w].value, grad(blk.ln2_w), grad(blk.ln2_b));

    dx = adapter_backward(dx, bc.adapter_mlp, refs(blk.adapter_mlp), grads(blk.adapter_mlp), frames,
                          config_.adapter_cls_mode);

    // Attention residual branch.
    const auto& ac = bc.attn;
    const Matrix<Scalar> d_context =
        linear_backward(dx, ac.context, params_[blk.proj_w].value, grad(blk.proj_w), grad(blk.proj_b));
    Matrix<Scalar> d_qkv(ac.qkv.rows(), ac.qkv.cols());
    for (int t = 0; t < frames; ++t)
      for (int h = 0; h < heads; ++h) {
        const auto& a = ac.probs[static_cast<std::size_t>(t) * heads + h];
        const auto q = ac.qkv.block(t * tokens, h * dh, tokens, dh);
        const auto k = ac.qkv.block(t * tokens, c + h * dh, tokens, dh);
        const auto v = ac.qkv.block(t * tokens, 2 * c + h * dh, tokens, dh);
        const auto d_out = d_context.block(t * tokens, h * dh, tokens, dh);
        d_qkv.block(t * tokens, 2 * c + h * dh, tokens, dh).noalias() = a.transpose() * d_out;
        const Matrix<Scalar> d_a = d_out * v.transpose();
        const Vector<Scalar> row_dot = (d_a.array() * a.array()).rowwise().sum();
        const Matrix<Scalar> d_s = (a.array() * (d_a.colwise() - row_dot).array()) * scale;
        d_qkv.block(t * tokens, h * dh, tokens, dh).noalias() = d_s * k;
        d_qkv.block(t * tokens, c + h * dh, tokens, dh).noalias() = d_s.transpose() * q;
      }
    const Matrix<Scalar> d_ln1 =
        linear_backward(d_qkv, ac.input, params_[blk.qkv_w].value, grad(blk.qkv_w), grad(blk.qkv_b));
    dx += layer_norm_backward(d_ln1, bc.ln1, params_[blk.ln1_w].value, grad(blk.ln1_w), grad(blk.ln1_b));

    dx = adapter_backward(dx, bc.adapter_attn, refs(blk.adapter_attn), grads(blk.adapter_attn), frames,
                          config_.adapter_cls_mode);
  }

  dx = layer_norm_backward(dx, cache.ln_pre, params_[ix.ln_pre_w].value, grad(ix.ln_pre_w), grad(ix.ln_pre_b));
  if (auto* g = grad(ix.class_token))
    for (int t = 0; t < frames; ++t) g->row(0) += dx.row(t * tokens);
  if (auto* g = grad(ix.pos_embed))
    for (int t = 0; t < frames; ++t) *g += dx.middleRows(t * tokens, tokens);
  if (auto* g = grad(ix.patch_embed)) {
    Matrix<Scalar> d_embedded(static_cast<Eigen::Index>(frames) * patches, c);
    for (int t = 0; t < frames; ++t)
      d_embedded.middleRows(t * patches, patches) = dx.middleRows(t * tokens + 1, patches);
    g->noalias() += cache.patches.transpose() * d_embedded;
  }
}

template <typename Scalar>
Vector<Scalar> Detector<Scalar>::head_probs(Head head, const Matrix<Scalar>& features) const {
  const auto& w = params_[head == Head::Patch ? index_.patch_head_w : index_.clip_head_w].value;
  const auto& b = params_[head == Head::Patch ? index_.patch_head_b : index_.clip_head_b].value;
  DS_CHECK(features.cols() == w.rows(), "shape_mismatch", "feature width does not match the classifier");
  const Matrix<Scalar> logits = linear(features, w, b);
  Vector<Scalar> probs(features.rows());
  for (Eigen::Index i = 0; i < probs.size(); ++i) probs(i) = softmax_fake_probability(logits(i, 0), logits(i, 1));
  return probs;
}

template <typename Scalar>
Matrix<Scalar> Detector<Scalar>::head_backward(Head head, const Matrix<Scalar>& features,
                                               const Vector<Scalar>& d_probs) {
  const std::size_t wi = head == Head::Patch ? index_.patch_head_w : index_.clip_head_w;
  const std::size_t bi = head == Head::Patch ? index_.patch_head_b : index_.clip_head_b;
  const Vector<Scalar> probs = head_probs(head, features);
  Matrix<Scalar> d_logits(features.rows(), 2);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const Scalar s = d_probs(i) * probs(i) * (Scalar(1) - probs(i));
    d_logits(i, 0) = -s;
    d_logits(i, 1) = s;
  }
  auto* gw = params_[wi].trainable ? &params_[wi].grad : nullptr;
  auto* gb = params_[bi].trainable ? &params_[bi].grad : nullptr;
  return linear_backward(d_logits, features, params_[wi].value, gw, gb);
}

template <typename Scalar>
Scalar Detector<Scalar>::classify(const RowVector<Scalar>& feature, Head head) const {
  DS_CHECK(feature.allFinite(), "invalid_argument", "classifier input must be finite");
  return head_probs(head, Matrix<Scalar>(feature))(0);
}

template class Detector<float>;
template class Detector<double>;

}  // namespace deepshield
