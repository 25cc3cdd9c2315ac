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

#include "deepshield/dfa.hpp"

#include <cmath>

namespace deepshield {

template <typename Scalar>
DomainStats<Scalar> channel_stats(const Matrix<Scalar>& features, double sigma_floor) {
  DS_CHECK(features.rows() > 0, "shape_mismatch", "channel_stats needs at least one row");
  DomainStats<Scalar> s;
  s.mu = features.colwise().mean().transpose();
  const Vector<Scalar> var =
      (features.rowwise() - s.mu.transpose()).array().square().colwise().mean().transpose();
  s.sigma = var.array().sqrt();
  s.floored = s.sigma.array() < static_cast<Scalar>(sigma_floor);
  s.sigma = s.sigma.array().max(static_cast<Scalar>(sigma_floor));
  return s;
}

template <typename Scalar>
DomainStats<Scalar> mix_stats(const DomainStats<Scalar>& a, const DomainStats<Scalar>& b, Scalar lambda) {
  DS_CHECK(a.mu.size() == b.mu.size(), "shape_mismatch", "statistics differ in channel count");
  DomainStats<Scalar> m;
  m.mu = lambda * a.mu + (Scalar(1) - lambda) * b.mu;
  m.sigma = lambda * a.sigma + (Scalar(1) - lambda) * b.sigma;
  m.floored = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(a.mu.size(), false);
  return m;
}

template <typename Scalar>
Matrix<Scalar> dfg_transform(const Matrix<Scalar>& features, const DomainStats<Scalar>& own,
                             const DomainStats<Scalar>& mixed) {
  const RowVector<Scalar> ratio = (mixed.sigma.array() / own.sigma.array()).matrix().transpose();
  Matrix<Scalar> out = (features.rowwise() - own.mu.transpose()).array().rowwise() * ratio.array();
  out.rowwise() += mixed.mu.transpose();
  return out;
}

template <typename Scalar>
Matrix<Scalar> bfg_transform(const Matrix<Scalar>& features, const DomainStats<Scalar>& own, Scalar alpha) {
  Matrix<Scalar> out = (features.rowwise() - own.mu.transpose()) * alpha;
  out.rowwise() += own.mu.transpose();
  return out;
}

DfaPlan plan_dfa(const std::vector<std::string>& tags, Rng& rng, const DfaConfig& config) {
  DS_CHECK(config.alpha >= 1.0, "invalid_argument", "alpha must be >= 1");
  DfaPlan plan;
  plan.alpha = config.alpha;
  if (tags.empty()) return plan;
  bool any_other = false;
  for (const auto& t : tags) any_other |= t != tags.front();
  plan.degenerate = !any_other;
  if (plan.degenerate && config.warn_degenerate) {
    warn("all fake groups share domain tag '" + tags.front() + "'; pairing within the tag");
  }
  for (std::size_t i = 0; i < tags.size(); ++i) {
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < tags.size(); ++j) {
      if (j == i) continue;
      if (plan.degenerate || tags[j] != tags[i]) candidates.push_back(j);
    }
    DfaPlan::Pairing p;
    p.partner = candidates.empty() ? i
                                   : candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    p.lambda = sample_beta(config.beta, config.beta, rng);
    if (config.symmetrize_lambda) p.lambda = std::max(p.lambda, 1.0 - p.lambda);
    plan.pairings.push_back(p);
  }
  return plan;
}

template <typename Scalar>
std::vector<AugmentedFeatures<Scalar>> apply_dfa(const std::vector<FakeFeatureGroup<Scalar>>& groups,
                                                 const DfaPlan& plan, const DfaConfig& config) {
  DS_CHECK(plan.pairings.size() == groups.size(), "shape_mismatch", "DFA plan does not match the fake groups");
  std::vector<DomainStats<Scalar>> stats;
  for (const auto& g : groups) {
    DS_CHECK(g.features.allFinite(), "non_finite", "fake features contain non-finite values");
    stats.push_back(channel_stats(g.features, config.sigma_floor));
  }
  std::vector<AugmentedFeatures<Scalar>> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& pair = plan.pairings[i];
    const auto mixed = mix_stats(stats[i], stats[pair.partner], static_cast<Scalar>(pair.lambda));
    out.push_back({dfg_transform(groups[i].features, stats[i], mixed), Label::Fake, FeatureOrigin::Dfg, i});
    out.push_back({bfg_transform(groups[i].features, stats[i], static_cast<Scalar>(plan.alpha)), Label::Fake,
                   FeatureOrigin::Bfg, i});
  }
  return out;
}

template <typename Scalar>
std::vector<AugmentedFeatures<Scalar>> augment_fake_batch(const std::vector<FakeFeatureGroup<Scalar>>& groups, Rng& rng,
                                                          const DfaConfig& config) {
  std::vector<std::string> tags;
  for (const auto& g : groups) tags.push_back(g.domain_tag);
  return apply_dfa(groups, plan_dfa(tags, rng, config), config);
}

template <typename Scalar>
std::vector<Matrix<Scalar>> dfa_backward(const std::vector<FakeFeatureGroup<Scalar>>& groups, const DfaPlan& plan,
                                         const std::vector<Matrix<Scalar>>& d_outputs, const DfaConfig& config) {
  DS_CHECK(d_outputs.size() == 2 * groups.size() && plan.pairings.size() == groups.size(), "shape_mismatch",
           "DFA gradients do not match the fake groups");
  std::vector<DomainStats<Scalar>> stats;
  std::vector<Matrix<Scalar>> normalized, grads;
  for (const auto& g : groups) {
    stats.push_back(channel_stats(g.features, config.sigma_floor));
    normalized.push_back((g.features.rowwise() - stats.back().mu.transpose()).array().rowwise() /
                         stats.back().sigma.transpose().array());
    grads.push_back(Matrix<Scalar>::Zero(g.features.rows(), g.features.cols()));
  }
  const Scalar alpha = static_cast<Scalar>(plan.alpha);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& pair = plan.pairings[i];
    const Scalar lambda = static_cast<Scalar>(pair.lambda);
    const auto& own = stats[i];
    const auto mixed = mix_stats(own, stats[pair.partner], lambda);
    const Matrix<Scalar>& d_dfg = d_outputs[2 * i];
    const Matrix<Scalar>& d_bfg = d_outputs[2 * i + 1];
    const Scalar rows = static_cast<Scalar>(groups[i].features.rows());
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> live = (!own.floored).template cast<Scalar>();

    if (!config.stats_grad) {
      const RowVector<Scalar> ratio = (mixed.sigma.array() / own.sigma.array()).matrix().transpose();
      grads[i] += (d_dfg.array().rowwise() * ratio.array()).matrix();
      grads[i] += alpha * d_bfg;
      continue;
    }

    // DFG: y = a * z + b with z = (f - mu) / sigma, a = sigma_mix, b = mu_mix.
    const Matrix<Scalar>& z = normalized[i];
    const Matrix<Scalar> dz = d_dfg.array().rowwise() * mixed.sigma.transpose().array();
    const RowVector<Scalar> dz_mean = dz.colwise().mean();
    const RowVector<Scalar> dzz_mean = (dz.array() * z.array()).colwise().mean().matrix();
    const RowVector<Scalar> live_row = live.matrix().transpose();
    Matrix<Scalar> df = (dz.rowwise() - dz_mean).array() - z.array().rowwise() * (dzz_mean.array() * live_row.array());
    df = df.array().rowwise() / own.sigma.transpose().array();
    const RowVector<Scalar> d_a = (d_dfg.array() * z.array()).colwise().sum().matrix();
    const RowVector<Scalar> d_b = d_dfg.colwise().sum();
    df += ((z.array().rowwise() * (lambda * d_a.array() * live_row.array())) / rows).matrix();
    df.rowwise() += lambda * d_b / rows;
    grads[i] += df;

    const std::size_t j = pair.partner;
    const RowVector<Scalar> live_j = (!stats[j].floored).template cast<Scalar>().matrix().transpose();
    Matrix<Scalar> dpartner =
        (normalized[j].array().rowwise() * ((Scalar(1) - lambda) * d_a.array() * live_j.array())) /
        static_cast<Scalar>(groups[j].features.rows());
    dpartner.rowwise() += (Scalar(1) - lambda) * d_b / static_cast<Scalar>(groups[j].features.rows());
    grads[j] += dpartner;

    // BFG: y = alpha * f + (1 - alpha) * mu.
    grads[i] += alpha * d_bfg;
    grads[i].rowwise() += (Scalar(1) - alpha) * d_bfg.colwise().mean();
  }
  return grads;
}

#define DS_INSTANTIATE(S)                                                                                         \
  template DomainStats<S> channel_stats(const Matrix<S>&, double);                                                \
  template DomainStats<S> mix_stats(const DomainStats<S>&, const DomainStats<S>&, S);                             \
  template Matrix<S> dfg_transform(const Matrix<S>&, const DomainStats<S>&, const DomainStats<S>&);               \
  template Matrix<S> bfg_transform(const Matrix<S>&, const DomainStats<S>&, S);                                   \
  template std::vector<AugmentedFeatures<S>> apply_dfa(const std::vector<FakeFeatureGroup<S>>&, const DfaPlan&,   \
                                                       const DfaConfig&);                                        \
  template std::vector<AugmentedFeatures<S>> augment_fake_batch(const std::vector<FakeFeatureGroup<S>>&, Rng&,    \
                                                                const DfaConfig&);                               \
  template std::vector<Matrix<S>> dfa_backward(const std::vector<FakeFeatureGroup<S>>&, const DfaPlan&,           \
                                               const std::vector<Matrix<S>>&, const DfaConfig&);

DS_INSTANTIATE(float)
DS_INSTANTIATE(double)
#undef DS_INSTANTIATE

}  // namespace deepshield
