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

#include "deepshield/sam.hpp"

#include <algorithm>
#include <cmath>

namespace deepshield {

namespace {

float cross(const Eigen::Vector2f& o, const Eigen::Vector2f& a, const Eigen::Vector2f& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool inside_hull(const std::vector<Eigen::Vector2f>& hull, const Eigen::Vector2f& p) {
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(hull[i], hull[(i + 1) % n], p) < 0.0f) return false;
  }
  return true;
}

float bilinear_grid(const Matrix<float>& grid, float u, float v) {
  const int g = static_cast<int>(grid.rows());
  u = std::clamp(u, 0.0f, static_cast<float>(g - 1));
  v = std::clamp(v, 0.0f, static_cast<float>(g - 1));
  const int i0 = std::min(static_cast<int>(v), g - 2), j0 = std::min(static_cast<int>(u), g - 2);
  const float fv = v - i0, fu = u - j0;
  return (1 - fv) * ((1 - fu) * grid(i0, j0) + fu * grid(i0, j0 + 1)) +
         fv * ((1 - fu) * grid(i0 + 1, j0) + fu * grid(i0 + 1, j0 + 1));
}

float sample_clamped(const ImagePlane& plane, float fx, float fy) {
  const int h = static_cast<int>(plane.rows()), w = static_cast<int>(plane.cols());
  fx = std::clamp(fx, 0.0f, static_cast<float>(w - 1));
  fy = std::clamp(fy, 0.0f, static_cast<float>(h - 1));
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const float ax = fx - x0, ay = fy - y0;
  return (1 - ay) * ((1 - ax) * plane(y0, x0) + ax * plane(y0, x1)) + ay * ((1 - ax) * plane(y1, x0) + ax * plane(y1, x1));
}

}  // namespace

EnhancementParams sample_enhancement(const SamConfig& config, Rng& rng) {
  std::bernoulli_distribution coin(0.5), enable(config.enhancement_prob);
  EnhancementParams p;
  p.target = coin(rng) ? EnhanceTarget::Inner : EnhanceTarget::Outer;
  p.color_on = enable(rng);
  p.brightness_on = enable(rng);
  p.sharpen_on = enable(rng);
  if (!p.color_on && !p.brightness_on && !p.sharpen_on) {
    switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
      case 0: p.color_on = true; break;
      case 1: p.brightness_on = true; break;
      default: p.sharpen_on = true; break;
    }
  }
  std::uniform_real_distribution<float> shift(-config.color_shift_max, config.color_shift_max);
  if (p.color_on) p.color_shift = Eigen::Vector3f(shift(rng), shift(rng), shift(rng));
  if (p.brightness_on) p.brightness = std::uniform_real_distribution<float>(config.brightness_min, config.brightness_max)(rng);
  if (p.sharpen_on) p.sharpen = std::uniform_real_distribution<float>(0.0f, config.sharpen_max)(rng);
  p.jitter = config.jitter;
  return p;
}

MaskParams sample_mask_params(const SamConfig& config, Rng& rng) {
  DS_CHECK(config.blur_min >= 1 && config.blur_min % 2 == 1 && config.blur_max >= config.blur_min &&
               config.blur_max % 2 == 1,
           "invalid_argument", "blur kernel range must be odd and ordered");
  DS_CHECK(!config.blend_ratios.empty(), "invalid_argument", "blend_ratios must not be empty");
  MaskParams p;
  if (config.deform_grid >= 2 && config.deform_max_fraction > 0.0f) {
    std::uniform_real_distribution<float> d(-config.deform_max_fraction, config.deform_max_fraction);
    p.deform_x.resize(config.deform_grid, config.deform_grid);
    p.deform_y.resize(config.deform_grid, config.deform_grid);
    for (Eigen::Index i = 0; i < p.deform_x.size(); ++i) {
      p.deform_x.data()[i] = d(rng);
      p.deform_y.data()[i] = d(rng);
    }
  }
  const int kernels = (config.blur_max - config.blur_min) / 2;
  p.blur_kernel = config.blur_min + 2 * std::uniform_int_distribution<int>(0, kernels)(rng);
  p.blend_ratio = config.blend_ratios[std::uniform_int_distribution<std::size_t>(0, config.blend_ratios.size() - 1)(rng)];
  p.blur_before_deform = config.blur_before_deform;
  return p;
}

std::vector<Eigen::Vector2f> convex_hull(const std::vector<Eigen::Vector2f>& points) {
  DS_CHECK(points.size() >= 3, "degenerate_hull", "convex hull needs at least 3 landmarks");
  std::vector<Eigen::Vector2f> pts = points;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Eigen::Vector2f> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += static_cast<double>(a.x()) * b.y() - static_cast<double>(b.x()) * a.y();
  }
  DS_CHECK(hull.size() >= 3 && std::abs(area) > 1e-6, "degenerate_hull", "landmarks are collinear");
  return hull;
}

ImagePlane make_blend_mask(const LandmarkSet& landmarks, const MaskParams& params, int height, int width) {
  DS_CHECK(params.blur_kernel >= 1 && params.blur_kernel % 2 == 1, "invalid_argument",
           "blur kernel must be odd and >= 1");
  DS_CHECK(params.blend_ratio > 0.0f && params.blend_ratio <= 1.0f, "invalid_argument", "blend_ratio must be in (0, 1]");
  const auto hull = convex_hull(landmarks.points);

  Eigen::Vector2f lo = hull.front(), hi = hull.front();
  for (const auto& p : hull) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const float face = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  const bool deform = params.has_deformation();
  float max_shift = 0.0f;
  if (deform) max_shift = face * std::max(params.deform_x.cwiseAbs().maxCoeff(), params.deform_y.cwiseAbs().maxCoeff());
  const int g = deform ? static_cast<int>(params.deform_x.rows()) : 0;

  auto displacement = [&](int x, int y) -> Eigen::Vector2f {
    if (!deform) return Eigen::Vector2f::Zero();
    const float u = width > 1 ? static_cast<float>(x) / (width - 1) * (g - 1) : 0.0f;
    const float v = height > 1 ? static_cast<float>(y) / (height - 1) * (g - 1) : 0.0f;
    return Eigen::Vector2f(bilinear_grid(params.deform_x, u, v), bilinear_grid(params.deform_y, u, v)) * face;
  };

  ImagePlane mask = ImagePlane::Zero(height, width);
  if (params.blur_before_deform) {
    ImagePlane base = ImagePlane::Zero(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (inside_hull(hull, Eigen::Vector2f(x + 0.5f, y + 0.5f))) base(y, x) = 1.0f;
    base = box_blur(base, params.blur_kernel);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Eigen::Vector2f d = displacement(x, y);
        mask(y, x) = sample_clamped(base, x + d.x(), y + d.y());
      }
  } else {
    const int x_lo = std::max(0, static_cast<int>(std::floor(lo.x() - max_shift)) - 1);
    const int x_hi = std::min(width - 1, static_cast<int>(std::ceil(hi.x() + max_shift)) + 1);
    const int y_lo = std::max(0, static_cast<int>(std::floor(lo.y() - max_shift)) - 1);
    const int y_hi = std::min(height - 1, static_cast<int>(std::ceil(hi.y() + max_shift)) + 1);
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x) {
        const Eigen::Vector2f q = Eigen::Vector2f(x + 0.5f, y + 0.5f) + displacement(x, y);
        if (inside_hull(hull, q)) mask(y, x) = 1.0f;
      }
    mask = box_blur(mask, params.blur_kernel);
  }
  return (mask * params.blend_ratio).cwiseMax(0.0f).cwiseMin(1.0f);
}

Frame enhance(const Frame& frame, const EnhancementParams& params, float jitter_scale) {
  Frame out = frame;
  for (int c = 0; c < 3; ++c) {
    auto& plane = out.channels[c];
    if (params.color_on) plane += params.color_shift[c] * jitter_scale;
    if (params.brightness_on) plane *= 1.0f + (params.brightness - 1.0f) * jitter_scale;
    if (params.sharpen_on) {
      const ImagePlane soft = box_blur(plane, 3);
      plane += params.sharpen * jitter_scale * (plane - soft);
    }
    plane = plane.cwiseMax(0.0f).cwiseMin(1.0f);
  }
  return out;
}

Frame blend_frames(const Frame& inner, const Frame& outer, const ImagePlane& mask) {
  DS_CHECK(inner.height() == outer.height() && inner.width() == outer.width() && mask.rows() == inner.height() &&
               mask.cols() == inner.width(),
           "shape_mismatch", "blend inputs must share one frame size");
  Frame out(inner.height(), inner.width());
  for (int c = 0; c < 3; ++c) {
    out.channels[c] = (mask * inner.channels[c] + (1.0f - mask) * outer.channels[c]).cwiseMax(0.0f).cwiseMin(1.0f);
  }
  return out;
}

SpatialBlend spatial_artifact_generate(const Frame& frame, const LandmarkSet& landmarks, const MaskParams& mask_params,
                                       const EnhancementParams& enh_params, float jitter_scale) {
  SpatialBlend result;
  result.mask = make_blend_mask(landmarks, mask_params, frame.height(), frame.width());
  Frame enhanced = enhance(frame, enh_params, jitter_scale);
  if (enh_params.target == EnhanceTarget::Inner) {
    result.inner = std::move(enhanced);
    result.outer = frame;
  } else {
    result.inner = frame;
    result.outer = std::move(enhanced);
  }
  result.blended = blend_frames(result.inner, result.outer, result.mask);
  return result;
}

SamResult temporal_artifact_generate(const VideoClip& clip, const std::vector<LandmarkSet>& landmarks, Rng& rng,
                                     const SamConfig& config, const SamObserver& observer) {
  DS_CHECK(landmarks.size() == clip.frames.size(), "landmark_count_mismatch",
           "clip has " + std::to_string(clip.frames.size()) + " frames but " + std::to_string(landmarks.size()) +
               " landmark sets");
  SamResult result;
  result.enhancement = sample_enhancement(config, rng);
  result.mask_params = sample_mask_params(config, rng);
  result.blended.source_id = clip.source_id;
  result.blended.start_index = clip.start_index;
  std::uniform_real_distribution<float> jitter(-config.jitter, config.jitter);
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    const float scale = config.jitter > 0.0f ? 1.0f + jitter(rng) : 1.0f;
    result.jitter_scales.push_back(scale);
    if (observer) observer(static_cast<int>(t), result.enhancement, result.mask_params);
    auto spatial = spatial_artifact_generate(clip.frames[t], landmarks[t], result.mask_params, result.enhancement, scale);
    result.blended.frames.push_back(std::move(spatial.blended));
    result.mask.push_back(std::move(spatial.mask));
  }
  return result;
}

}  // namespace deepshield
