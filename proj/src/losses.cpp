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

#include "deepshield/losses.hpp"

#include <cmath>
#include <limits>

namespace deepshield {

void LossWeights::validate() const {
  DS_CHECK(omega >= 0 && upsilon >= 0, "out_of_range", "loss weights must be non-negative");
  DS_CHECK(tau > 0, "out_of_range", "temperature must be positive");
}

template <typename Scalar>
Scalar cls_loss(const Vector<Scalar>& probs, const std::vector<int>& labels, double eps) {
  DS_CHECK(static_cast<std::size_t>(probs.size()) == labels.size() && !labels.empty(), "shape_mismatch",
           "probabilities and labels differ in length");
  const Scalar lo = static_cast<Scalar>(eps), hi = static_cast<Scalar>(1.0 - eps);
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const Scalar p = std::clamp(probs(i), lo, hi);
    sum += labels[static_cast<std::size_t>(i)] ? std::log(p) : std::log(Scalar(1) - p);
  }
  return -sum / static_cast<Scalar>(probs.size());
}

template <typename Scalar>
Vector<Scalar> cls_loss_gradient(const Vector<Scalar>& probs, const std::vector<int>& labels, double eps) {
  DS_CHECK(static_cast<std::size_t>(probs.size()) == labels.size() && !labels.empty(), "shape_mismatch",
           "probabilities and labels differ in length");
  const Scalar n = static_cast<Scalar>(probs.size());
  Vector<Scalar> g(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const Scalar p = probs(i);
    if (p < eps || p > 1.0 - eps) {
      g(i) = 0;
    } else {
      g(i) = labels[static_cast<std::size_t>(i)] ? -Scalar(1) / (p * n) : Scalar(1) / ((Scalar(1) - p) * n);
    }
  }
  return g;
}

template <typename Scalar>
SupConResult<Scalar> supcon_loss(const Matrix<Scalar>& features, const std::vector<int>& labels,
                                 const SupConOptions& options) {
  const Eigen::Index b = features.rows();
  DS_CHECK(static_cast<std::size_t>(b) == labels.size(), "shape_mismatch", "features and labels differ in length");
  DS_CHECK(b >= 2, "shape_mismatch", "supervised contrastive loss needs at least two samples");
  DS_CHECK(options.tau > 0, "out_of_range", "temperature must be positive");
  const Scalar inv_tau = static_cast<Scalar>(1.0 / options.tau);

  Matrix<Scalar> h = features;
  Vector<Scalar> norms = Vector<Scalar>::Ones(b);
  if (options.normalize) {
    norms = features.rowwise().norm().cwiseMax(Scalar(1e-12));
    h = features.array().colwise() / norms.array();
  }
  const Matrix<Scalar> sim = (h * h.transpose()) * inv_tau;

  // d loss / d sim, accumulated per anchor.
  Matrix<Scalar> d_sim = Matrix<Scalar>::Zero(b, b);
  SupConResult<Scalar> result;
  Scalar total = 0;
  int anchors = 0;
  for (Eigen::Index v = 0; v < b; ++v) {
    std::vector<Eigen::Index> positives, denom;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == v) continue;
      const bool same = labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(v)];
      if (same) positives.push_back(j);
      if (same || options.denominator == SupConDenominator::Standard) denom.push_back(j);
    }
    if (positives.empty()) {
      ++result.skipped_anchors;
      continue;
    }
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (auto j : denom) mx = std::max(mx, sim(v, j));
    Scalar z = 0;
    for (auto j : denom) z += std::exp(sim(v, j) - mx);
    const Scalar lse = mx + std::log(z);
    Scalar anchor_loss = 0;
    for (auto i : positives) anchor_loss -= sim(v, i) - lse;
    const Scalar inv_pos = Scalar(1) / static_cast<Scalar>(positives.size());
    total += anchor_loss * inv_pos;
    ++anchors;
    for (auto i : positives) d_sim(v, i) -= inv_pos;
    for (auto j : denom) d_sim(v, j) += std::exp(sim(v, j) - lse);
  }
  if (result.skipped_anchors > 0) {
    warn(std::to_string(result.skipped_anchors) + " supcon anchor(s) have no same-class partner and were skipped");
  }
  result.grad = Matrix<Scalar>::Zero(b, features.cols());
  if (anchors == 0) return result;
  const Scalar inv_anchors = Scalar(1) / static_cast<Scalar>(anchors);
  result.loss = total * inv_anchors;
  d_sim *= inv_anchors * inv_tau;
  const Matrix<Scalar> d_h = d_sim * h + d_sim.transpose() * h;
  if (options.normalize) {
    const Vector<Scalar> dots = (d_h.array() * h.array()).rowwise().sum();
    result.grad = ((d_h - h.cwiseProduct(dots.replicate(1, h.cols()))).array().colwise() / norms.array()).matrix();
  } else {
    result.grad = d_h;
  }
  return result;
}

template float cls_loss(const Vector<float>&, const std::vector<int>&, double);
template double cls_loss(const Vector<double>&, const std::vector<int>&, double);
template Vector<float> cls_loss_gradient(const Vector<float>&, const std::vector<int>&, double);
template Vector<double> cls_loss_gradient(const Vector<double>&, const std::vector<int>&, double);
template SupConResult<float> supcon_loss(const Matrix<float>&, const std::vector<int>&, const SupConOptions&);
template SupConResult<double> supcon_loss(const Matrix<double>&, const std::vector<int>&, const SupConOptions&);

}  // namespace deepshield
