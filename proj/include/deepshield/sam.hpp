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

#include <functional>
#include <vector>

#include "deepshield/data.hpp"

namespace deepshield {

/// Sampling ranges for spatiotemporal artifact blending.
struct SamConfig {
  float color_shift_max = 0.08f;
  float brightness_min = 0.9f;
  float brightness_max = 1.1f;
  float sharpen_max = 0.5f;
  /// Each enhancement family is enabled independently with this probability (at least one is forced on).
  float enhancement_prob = 0.5f;
  int deform_grid = 4;
  /// Maximum control-point displacement as a fraction of the face size.
  float deform_max_fraction = 0.05f;
  int blur_min = 3;
  int blur_max = 15;
  std::vector<float> blend_ratios = {0.25f, 0.5f, 0.75f, 1.0f};
  /// Per-frame multiplicative jitter on enhancement magnitude; 0 disables.
  float jitter = 0.02f;
  bool blur_before_deform = false;
};

enum class EnhanceTarget { Inner, Outer };

struct EnhancementParams {
  EnhanceTarget target = EnhanceTarget::Inner;
  bool color_on = false;
  bool brightness_on = false;
  bool sharpen_on = false;
  Eigen::Vector3f color_shift = Eigen::Vector3f::Zero();
  float brightness = 1.0f;
  float sharpen = 0.0f;
  float jitter = 0.0f;
};

struct MaskParams {
  /// Control-grid displacements in units of face size; empty means no deformation.
  Matrix<float> deform_x;
  Matrix<float> deform_y;
  int blur_kernel = 1;
  float blend_ratio = 1.0f;
  bool blur_before_deform = false;

  bool has_deformation() const { return deform_x.size() > 0; }
};

EnhancementParams sample_enhancement(const SamConfig& config, Rng& rng);
MaskParams sample_mask_params(const SamConfig& config, Rng& rng);

/// Counter-clockwise convex hull; throws `degenerate_hull` for fewer than 3 non-collinear points.
std::vector<Eigen::Vector2f> convex_hull(const std::vector<Eigen::Vector2f>& points);

/// Soft mask from the (deformed, blurred) landmark hull, peak value blend_ratio.
ImagePlane make_blend_mask(const LandmarkSet& landmarks, const MaskParams& params, int height, int width);

Frame enhance(const Frame& frame, const EnhancementParams& params, float jitter_scale = 1.0f);

/// mask * inner + (1 - mask) * outer, clamped to [0, 1].
Frame blend_frames(const Frame& inner, const Frame& outer, const ImagePlane& mask);

struct SpatialBlend {
  Frame blended;
  ImagePlane mask;
  Frame inner;
  Frame outer;
};

SpatialBlend spatial_artifact_generate(const Frame& frame, const LandmarkSet& landmarks, const MaskParams& mask_params,
                                       const EnhancementParams& enh_params, float jitter_scale = 1.0f);

struct SamResult {
  VideoClip blended;
  BlendMask mask;
  EnhancementParams enhancement;
  MaskParams mask_params;
  std::vector<float> jitter_scales;
};

/// Called once per frame with the parameter objects used for that frame.
using SamObserver = std::function<void(int frame, const EnhancementParams&, const MaskParams&)>;

/// Samples one enhancement and one mask parameter set and applies them to every frame of the clip.
SamResult temporal_artifact_generate(const VideoClip& clip, const std::vector<LandmarkSet>& landmarks, Rng& rng,
                                     const SamConfig& config = {}, const SamObserver& observer = {});

}  // namespace deepshield
