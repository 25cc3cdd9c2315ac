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

#include <vector>

#include "deepshield/common.hpp"
#include "deepshield/patch.hpp"

namespace deepshield {

/// Mean of the T frame-level class embeddings.
template <typename Scalar>
RowVector<Scalar> global_clip_feature(const Matrix<Scalar>& class_embeddings) {
  DS_CHECK(class_embeddings.rows() >= 1, "shape_mismatch", "global_clip_feature needs at least one frame");
  return class_embeddings.colwise().mean();
}

/// Mean binary cross-entropy of fake probabilities.
template <typename Scalar>
Scalar cls_loss(const Vector<Scalar>& probs, const std::vector<int>& labels, double eps = kLogClampEps);

template <typename Scalar>
Vector<Scalar> cls_loss_gradient(const Vector<Scalar>& probs, const std::vector<int>& labels,
                                 double eps = kLogClampEps);

enum class SupConDenominator {
  Paper,     ///< sum over same-class samples other than the anchor
  Standard,  ///< sum over every sample other than the anchor
};

struct SupConOptions {
  double tau = 0.07;
  SupConDenominator denominator = SupConDenominator::Paper;
  bool normalize = true;
};

template <typename Scalar>
struct SupConResult {
  Scalar loss = 0;
  Matrix<Scalar> grad;  ///< d loss / d features
  int skipped_anchors = 0;
};

/// Supervised contrastive loss over B x C features. Positives of an anchor are the other samples
/// of its class; anchors without positives are skipped with a warning.
template <typename Scalar>
SupConResult<Scalar> supcon_loss(const Matrix<Scalar>& features, const std::vector<int>& labels,
                                 const SupConOptions& options = {});

struct LossWeights {
  double omega = 0.5;
  double upsilon = 0.5;
  double tau = 0.07;

  void validate() const;
};

template <typename Scalar>
Scalar gfd_loss(Scalar cls, Scalar supcon, const LossWeights& w) {
  return cls + static_cast<Scalar>(w.upsilon) * supcon;
}

/// cls_loss + upsilon * supcon_loss on one batch.
template <typename Scalar>
Scalar gfd_loss(const Vector<Scalar>& probs, const std::vector<int>& labels, const Matrix<Scalar>& features,
                const LossWeights& w, SupConOptions options = {}) {
  options.tau = w.tau;
  return gfd_loss(cls_loss(probs, labels), supcon_loss(features, labels, options).loss, w);
}

template <typename Scalar>
Scalar overall_loss(Scalar lpg, Scalar gfd, const LossWeights& w) {
  return static_cast<Scalar>(w.omega) * lpg + gfd;
}

}  // namespace deepshield
