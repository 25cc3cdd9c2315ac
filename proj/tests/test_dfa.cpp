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

#include "deepshield/dfa.hpp"
#include "test_support.hpp"

namespace deepshield {
namespace {

using testing::relative_error;

Matrix<double> random_features(int rows, int cols, Rng& rng, double shift = 0.0, double scale = 1.0) {
  std::normal_distribution<double> n(shift, scale);
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Independent two-pass oracle.
std::pair<std::vector<double>, std::vector<double>> two_pass_stats(const Matrix<double>& f) {
  std::vector<double> mu(f.cols()), sigma(f.cols());
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    double sum = 0;
    for (Eigen::Index r = 0; r < f.rows(); ++r) sum += f(r, c);
    mu[c] = sum / f.rows();
    double ss = 0;
    for (Eigen::Index r = 0; r < f.rows(); ++r) ss += (f(r, c) - mu[c]) * (f(r, c) - mu[c]);
    sigma[c] = std::sqrt(ss / f.rows());
  }
  return {mu, sigma};
}

DomainStats<double> make_stats(std::vector<double> mu, std::vector<double> sigma) {
  DomainStats<double> s;
  s.mu = Eigen::Map<Vector<double>>(mu.data(), mu.size());
  s.sigma = Eigen::Map<Vector<double>>(sigma.data(), sigma.size());
  s.floored = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(mu.size(), false);
  return s;
}

std::vector<FakeFeatureGroup<double>> random_groups(const std::vector<std::string>& tags, int rows, int cols,
                                                    Rng& rng) {
  std::vector<FakeFeatureGroup<double>> g;
  std::uniform_real_distribution<double> u(-2.0, 2.0), s(0.3, 3.0);
  for (const auto& t : tags) g.push_back({random_features(rows, cols, rng, u(rng), s(rng)), t});
  return g;
}

TEST(ChannelStats, HandExample) {
  Matrix<double> f(2, 1);
  f << 1.0, 3.0;
  const auto s = channel_stats(f);
  EXPECT_DOUBLE_EQ(s.mu(0), 2.0);
  EXPECT_DOUBLE_EQ(s.sigma(0), 1.0);
  EXPECT_FALSE(s.floored(0));
}

TEST(ChannelStats, ConstantChannelHitsFloor) {
  Matrix<double> f = Matrix<double>::Constant(6, 3, 0.7);
  f(2, 1) = 1.5;
  const auto s = channel_stats(f);
  EXPECT_DOUBLE_EQ(s.sigma(0), kSigmaFloor);
  EXPECT_TRUE(s.floored(0));
  EXPECT_FALSE(s.floored(1));
  EXPECT_DOUBLE_EQ(s.sigma(2), kSigmaFloor);
}

TEST(ChannelStats, MatchesTwoPassOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix<double> f = random_features(48, 16, rng, 3.0, 2.0);
    const auto s = channel_stats(f);
    const auto [mu, sigma] = two_pass_stats(f);
    for (int c = 0; c < 16; ++c) {
      EXPECT_NEAR(s.mu(c), mu[c], 1e-6);
      EXPECT_NEAR(s.sigma(c), sigma[c], 1e-6);
    }
  }
}

TEST(MixStats, EndpointsAndMidpoint) {
  const auto a = make_stats({2.0, -1.0}, {1.0, 0.5});
  const auto b = make_stats({4.0, 3.0}, {3.0, 1.5});
  const auto m1 = mix_stats(a, b, 1.0), m0 = mix_stats(a, b, 0.0), mh = mix_stats(a, b, 0.5);
  EXPECT_EQ(m1.mu, a.mu);
  EXPECT_EQ(m1.sigma, a.sigma);
  EXPECT_EQ(m0.mu, b.mu);
  EXPECT_EQ(m0.sigma, b.sigma);
  EXPECT_DOUBLE_EQ(mh.mu(0), 3.0);
  EXPECT_DOUBLE_EQ(mh.sigma(1), 1.0);
}

TEST(DfgTransform, Examples) {
  Matrix<double> f(1, 1);
  f << 1.0;
  EXPECT_DOUBLE_EQ(dfg_transform(f, make_stats({2.0}, {1.0}), make_stats({0.0}, {2.0}))(0, 0), -2.0);

  Rng rng(2);
  const Matrix<double> g = random_features(10, 5, rng);
  const auto own = channel_stats(g);
  EXPECT_LT((dfg_transform(g, own, own) - g).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(BfgTransform, Examples) {
  Matrix<double> f(1, 1);
  f << 1.0;
  EXPECT_DOUBLE_EQ(bfg_transform(f, make_stats({2.0}, {1.0}), 1.1)(0, 0), 0.9);

  Rng rng(3);
  const Matrix<double> g = random_features(10, 5, rng);
  EXPECT_LT((bfg_transform(g, channel_stats(g), 1.0) - g).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DfaTransforms, RecomputedStatistics) {
  Rng rng(4);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix<double> f = random_features(24, 8, rng, 1.0, 2.0);
    const Matrix<double> g = random_features(24, 8, rng, -3.0, 0.5);
    const auto own = channel_stats(f);
    const auto mixed = mix_stats(own, channel_stats(g), lam(rng));

    const Matrix<double> d = dfg_transform(f, own, mixed);
    const auto [dmu, dsigma] = two_pass_stats(d);
    for (int c = 0; c < 8; ++c) {
      EXPECT_NEAR(dmu[c], mixed.mu(c), 1e-5);
      EXPECT_NEAR(dsigma[c], mixed.sigma(c), 1e-5);
    }

    const Matrix<double> b = bfg_transform(f, own, 1.1);
    const auto [bmu, bsigma] = two_pass_stats(b);
    for (int c = 0; c < 8; ++c) {
      EXPECT_NEAR(bmu[c], own.mu(c), 1e-5);
      EXPECT_NEAR(bsigma[c], 1.1 * own.sigma(c), 1e-5);
    }
    // Distances to the mean scale by exactly alpha.
    const Matrix<double> dist_in = f.rowwise() - own.mu.transpose();
    const Matrix<double> dist_out = b.rowwise() - own.mu.transpose();
    EXPECT_LT((dist_out - 1.1 * dist_in).cwiseAbs().maxCoeff(), 1e-12);

    // Composition: bfg(dfg(f)) has deviation alpha * sigma_mix.
    const Matrix<double> comp = bfg_transform(d, channel_stats(d), 1.1);
    const auto [cmu, csigma] = two_pass_stats(comp);
    for (int c = 0; c < 8; ++c) EXPECT_NEAR(csigma[c], 1.1 * mixed.sigma(c), 1e-5);
  }
}

TEST(PlanDfa, PairsAcrossDomains) {
  Rng rng(5);
  const std::vector<std::string> tags = {"Deepfakes", "FaceSwap", "Deepfakes", "sam-blend"};
  for (int trial = 0; trial < 50; ++trial) {
    const auto plan = plan_dfa(tags, rng);
    ASSERT_EQ(plan.pairings.size(), 4u);
    EXPECT_FALSE(plan.degenerate);
    EXPECT_DOUBLE_EQ(plan.alpha, 1.1);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NE(tags[plan.pairings[i].partner], tags[i]);
      EXPECT_GE(plan.pairings[i].lambda, 0.0);
      EXPECT_LE(plan.pairings[i].lambda, 1.0);
    }
  }
}

TEST(PlanDfa, DeterministicForFixedSeed) {
  const std::vector<std::string> tags = {"a", "b", "c", "a"};
  Rng r1(77), r2(77);
  const auto p1 = plan_dfa(tags, r1), p2 = plan_dfa(tags, r2);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    EXPECT_EQ(p1.pairings[i].partner, p2.pairings[i].partner);
    EXPECT_EQ(p1.pairings[i].lambda, p2.pairings[i].lambda);
  }
}

TEST(PlanDfa, LambdaFollowsUShapedBeta) {
  // Beta(0.1, 0.1) puts most of its mass near 0 and 1 and has mean 0.5.
  Rng rng(6);
  const std::vector<std::string> tags = {"a", "b"};
  int extreme = 0, n = 0;
  double sum = 0;
  for (int trial = 0; trial < 2000; ++trial)
    for (const auto& p : plan_dfa(tags, rng).pairings) {
      extreme += p.lambda < 0.1 || p.lambda > 0.9;
      sum += p.lambda;
      ++n;
    }
  EXPECT_GT(static_cast<double>(extreme) / n, 0.6);
  EXPECT_NEAR(sum / n, 0.5, 0.05);
}

TEST(PlanDfa, DegenerateDomainWarnsAndPairsWithinTag) {
  testing::WarningCapture w;
  Rng rng(7);
  const auto plan = plan_dfa({"sam-blend", "sam-blend", "sam-blend"}, rng);
  EXPECT_TRUE(plan.degenerate);
  EXPECT_EQ(w.captured().size(), 1u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NE(plan.pairings[i].partner, i);

  DfaConfig quiet;
  quiet.warn_degenerate = false;
  plan_dfa({"x", "x"}, rng, quiet);
  EXPECT_EQ(w.captured().size(), 1u);
}

TEST(AugmentFakeBatch, FourGroupsGiveEightFakeSets) {
  Rng rng(8);
  const auto groups = random_groups({"Deepfakes", "FaceSwap", "Face2Face", "sam-blend"}, 12, 6, rng);
  const auto out = augment_fake_batch(groups, rng);
  ASSERT_EQ(out.size(), 8u);
  for (std::size_t k = 0; k < out.size(); ++k) {
    EXPECT_EQ(out[k].label, Label::Fake);
    EXPECT_EQ(out[k].origin, k % 2 == 0 ? FeatureOrigin::Dfg : FeatureOrigin::Bfg);
    EXPECT_EQ(out[k].source, k / 2);
    EXPECT_EQ(out[k].features.rows(), 12);
    EXPECT_TRUE(out[k].features.allFinite());
  }
  Rng a(9), b(9);
  const auto x = augment_fake_batch(groups, a), y = augment_fake_batch(groups, b);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(x[k].features, y[k].features);
}

TEST(AugmentFakeBatch, ConstantFeaturesStayFinite) {
  Rng rng(10);
  std::vector<FakeFeatureGroup<double>> groups = {{Matrix<double>::Constant(4, 3, 2.0), "a"},
                                                  {Matrix<double>::Constant(4, 3, -1.0), "b"}};
  for (const auto& o : augment_fake_batch(groups, rng)) EXPECT_TRUE(o.features.allFinite());
}

// Objective sum_k <W_k, out_k>; the const-stats convention freezes mu and sigma at their input values.
double objective(const std::vector<FakeFeatureGroup<double>>& groups, const DfaPlan& plan,
                 const std::vector<Matrix<double>>& weights, const std::vector<DomainStats<double>>* frozen) {
  double total = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto own = frozen ? (*frozen)[i] : channel_stats(groups[i].features);
    const auto other = frozen ? (*frozen)[plan.pairings[i].partner] : channel_stats(groups[plan.pairings[i].partner].features);
    const auto mixed = mix_stats(own, other, plan.pairings[i].lambda);
    total += (dfg_transform(groups[i].features, own, mixed).array() * weights[2 * i].array()).sum();
    total += (bfg_transform(groups[i].features, own, plan.alpha).array() * weights[2 * i + 1].array()).sum();
  }
  return total;
}

class DfaBackward : public ::testing::TestWithParam<bool> {};

TEST_P(DfaBackward, MatchesFiniteDifferences) {
  DfaConfig config;
  config.stats_grad = GetParam();
  Rng rng(11);
  auto groups = random_groups({"a", "b", "c"}, 6, 4, rng);
  groups[1].features.col(2).setConstant(0.25);  // a floored channel
  const auto plan = plan_dfa({"a", "b", "c"}, rng, config);
  std::vector<Matrix<double>> weights;
  for (int k = 0; k < 6; ++k) weights.push_back(random_features(6, 4, rng));

  const auto grads = dfa_backward(groups, plan, weights, config);
  std::vector<DomainStats<double>> frozen;
  for (const auto& g : groups) frozen.push_back(channel_stats(g.features));
  const auto* stats = config.stats_grad ? nullptr : &frozen;

  const double h = 1e-6;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (Eigen::Index i = 0; i < groups[gi].features.size(); ++i) {
      if (gi == 1 && i % 4 == 2) continue;  // perturbing a constant channel leaves the floor regime
      double& x = groups[gi].features.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = objective(groups, plan, weights, stats);
      x = saved - h;
      const double down = objective(groups, plan, weights, stats);
      x = saved;
      EXPECT_LT(relative_error(grads[gi].data()[i], (up - down) / (2 * h), 1e-6), 1e-4)
          << "group " << gi << " entry " << i;
    }
}

INSTANTIATE_TEST_SUITE_P(StatsModes, DfaBackward, ::testing::Values(false, true));

TEST(DfaBackward, ConstStatsJacobianIsDiagonalRatio) {
  Rng rng(12);
  const auto groups = random_groups({"a", "b"}, 5, 3, rng);
  const auto plan = plan_dfa({"a", "b"}, rng);
  std::vector<Matrix<double>> d = {Matrix<double>::Ones(5, 3), Matrix<double>::Zero(5, 3), Matrix<double>::Zero(5, 3),
                                   Matrix<double>::Ones(5, 3)};
  const auto g = dfa_backward(groups, plan, d);
  const auto own = channel_stats(groups[0].features);
  const auto mixed = mix_stats(own, channel_stats(groups[1].features), plan.pairings[0].lambda);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(g[0](0, c), mixed.sigma(c) / own.sigma(c), 1e-12);
  EXPECT_TRUE(g[1].isApprox(Matrix<double>::Constant(5, 3, 1.1)));
}

}  // namespace
}  // namespace deepshield
