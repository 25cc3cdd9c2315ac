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

#include "deepshield/common.hpp"

namespace deepshield {

inline constexpr double kSigmaFloor = 1e-5;

/// Per-channel population mean and standard deviation of class embeddings.
template <typename Scalar>
struct DomainStats {
  Vector<Scalar> mu;
  Vector<Scalar> sigma;
  /// Channels whose deviation was raised to the floor (no gradient through sigma there).
  Eigen::Array<bool, Eigen::Dynamic, 1> floored;
};

/// Statistics over the rows of an (N*T) x C feature matrix.
template <typename Scalar>
DomainStats<Scalar> channel_stats(const Matrix<Scalar>& features, double sigma_floor = kSigmaFloor);

/// lambda * a + (1 - lambda) * b, for both moments.
template <typename Scalar>
DomainStats<Scalar> mix_stats(const DomainStats<Scalar>& a, const DomainStats<Scalar>& b, Scalar lambda);

/// AdaIN: renormalize from `own` statistics to `mixed` statistics.
template <typename Scalar>
Matrix<Scalar> dfg_transform(const Matrix<Scalar>& features, const DomainStats<Scalar>& own,
                             const DomainStats<Scalar>& mixed);

/// Scales deviations from the mean by alpha.
template <typename Scalar>
Matrix<Scalar> bfg_transform(const Matrix<Scalar>& features, const DomainStats<Scalar>& own, Scalar alpha);

/// Class embeddings of one fake video: N clips x T frames stacked as rows.
template <typename Scalar>
struct FakeFeatureGroup {
  Matrix<Scalar> features;
  std::string domain_tag;
};

struct DfaConfig {
  double alpha = 1.1;
  /// Both Beta shape parameters for the mixing weight.
  double beta = 0.1;
  bool symmetrize_lambda = false;
  /// Backpropagate through mean and deviation instead of treating them as constants.
  bool stats_grad = false;
  double sigma_floor = kSigmaFloor;
  bool warn_degenerate = true;
};

enum class FeatureOrigin { Dataset, SamBlend, Dfg, Bfg };

/// The random choices of one augmentation round, fixed before features exist.
struct DfaPlan {
  struct Pairing {
    std::size_t partner = 0;
    double lambda = 0.5;
  };
  std::vector<Pairing> pairings;  ///< one per input group
  double alpha = 1.1;
  bool degenerate = false;  ///< all groups shared one domain tag
};

DfaPlan plan_dfa(const std::vector<std::string>& domain_tags, Rng& rng, const DfaConfig& config = {});

template <typename Scalar>
struct AugmentedFeatures {
  Matrix<Scalar> features;
  Label label = Label::Fake;
  FeatureOrigin origin = FeatureOrigin::Dfg;
  std::size_t source = 0;
};

/// Emits [DFG(g_i), BFG(g_i)] for every group i.
template <typename Scalar>
std::vector<AugmentedFeatures<Scalar>> apply_dfa(const std::vector<FakeFeatureGroup<Scalar>>& groups,
                                                 const DfaPlan& plan, const DfaConfig& config = {});

template <typename Scalar>
std::vector<AugmentedFeatures<Scalar>> augment_fake_batch(const std::vector<FakeFeatureGroup<Scalar>>& groups, Rng& rng,
                                                          const DfaConfig& config = {});

/// Gradients w.r.t. each group's features given gradients of apply_dfa's outputs.
template <typename Scalar>
std::vector<Matrix<Scalar>> dfa_backward(const std::vector<FakeFeatureGroup<Scalar>>& groups, const DfaPlan& plan,
                                         const std::vector<Matrix<Scalar>>& d_outputs, const DfaConfig& config = {});

}  // namespace deepshield
