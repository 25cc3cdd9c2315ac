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

#include <algorithm>
#include <cmath>

#include "deepshield/data.hpp"

namespace deepshield {

/// T x P binary patch labels, patches row-major over the frame grid.
struct PatchLabelGrid {
  Eigen::MatrixXi labels;
  int theta = 10;
};

inline constexpr double kLogClampEps = 1e-7;

/// Number of strictly positive entries.
template <typename Derived>
int patch_mask_score(const Eigen::DenseBase<Derived>& patch_mask) {
  return static_cast<int>((patch_mask.derived().array() > 0).count());
}

/// Label 1 where at least `theta` mask pixels of the patch are positive.
PatchLabelGrid patch_labels(const BlendMask& mask, int num_patches, int theta);

/// Mean binary cross-entropy over a T x P grid of probabilities.
template <typename Scalar>
Scalar lpg_loss(const Matrix<Scalar>& probs, const Eigen::MatrixXi& labels, double eps = kLogClampEps) {
  DS_CHECK(probs.rows() == labels.rows() && probs.cols() == labels.cols(), "shape_mismatch",
           "patch probabilities and labels differ in shape");
  DS_CHECK(probs.size() > 0, "shape_mismatch", "empty patch grid");
  const Scalar lo = static_cast<Scalar>(eps), hi = static_cast<Scalar>(1.0 - eps);
  Scalar sum = 0;
  for (Eigen::Index t = 0; t < probs.rows(); ++t)
    for (Eigen::Index p = 0; p < probs.cols(); ++p) {
      const Scalar q = std::clamp(probs(t, p), lo, hi);
      sum += labels(t, p) ? std::log(q) : std::log(Scalar(1) - q);
    }
  return -sum / static_cast<Scalar>(probs.size());
}

/// d lpg_loss / d probs; zero where the clamp is active.
template <typename Scalar>
Matrix<Scalar> lpg_loss_gradient(const Matrix<Scalar>& probs, const Eigen::MatrixXi& labels,
                                 double eps = kLogClampEps) {
  DS_CHECK(probs.rows() == labels.rows() && probs.cols() == labels.cols(), "shape_mismatch",
           "patch probabilities and labels differ in shape");
  const Scalar n = static_cast<Scalar>(probs.size());
  Matrix<Scalar> grad(probs.rows(), probs.cols());
  for (Eigen::Index t = 0; t < probs.rows(); ++t)
    for (Eigen::Index p = 0; p < probs.cols(); ++p) {
      const Scalar q = probs(t, p);
      if (q < eps || q > 1.0 - eps) {
        grad(t, p) = 0;
      } else {
        grad(t, p) = labels(t, p) ? -Scalar(1) / (q * n) : Scalar(1) / ((Scalar(1) - q) * n);
      }
    }
  return grad;
}

}  // namespace deepshield
