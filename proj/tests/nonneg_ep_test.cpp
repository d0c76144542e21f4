/*
 * Copyright 2026 The binned-gp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "binned_gp/nonneg_ep.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "binned_gp/gp_regression.hpp"
#include "binned_gp/scenarios.hpp"
#include "test_support.hpp"

namespace bgp {
namespace {

using testing::Gen;

Hyperrectangle span(double s, double t) {
  return Hyperrectangle(Eigen::VectorXd::Constant(1, s), Eigen::VectorXd::Constant(1, t));
}

LatentPoint at(double t) { return Eigen::VectorXd::Constant(1, t); }

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct TiltedMoments {
  double log_z;
  double mean;
  double variance;
};

// Moments of N(f; m, v) Phi(f / s) by direct quadrature.
TiltedMoments tilted_by_quadrature(double m, double v, double s) {
  const double sd = std::sqrt(v);
  const double lo = m - 12 * sd;
  const double hi = m + 12 * sd;
  auto density = [&](double f) {
    return std::exp(-0.5 * (f - m) * (f - m) / v) / std::sqrt(2 * std::numbers::pi * v) * phi_cdf(f / s);
  };
  const double z = testing::adaptive_split(density, lo, hi, 0.0, 1e-13);
  const double mean = testing::adaptive_split([&](double f) { return f * density(f); }, lo, hi, 0.0, 1e-13) / z;
  const double second =
      testing::adaptive_split([&](double f) { return (f - mean) * (f - mean) * density(f); }, lo, hi, 0.0, 1e-13) / z;
  return {std::log(z), mean, second};
}

BinnedDataset small_data() {
  BinnedDataset data;
  data.regions = {span(0, 2), span(2, 3), span(5, 7)};
  data.y = Eigen::Vector3d(1.5, -0.8, 2.0);
  return data;
}

TEST(PlaceVirtualGrid, ThreeEvenlySpacedPoints) {
  const VirtualPoints vp = place_virtual_grid(span(0, 10), {3});
  ASSERT_EQ(vp.size(), 3);
  EXPECT_EQ(vp.locations[0](0), 0.0);
  EXPECT_EQ(vp.locations[1](0), 5.0);
  EXPECT_EQ(vp.locations[2](0), 10.0);
}

TEST(PlaceVirtualGrid, FiftyThreeUnitSpacedPoints) {
  const VirtualPoints vp = place_virtual_grid(span(0, 52), {53});
  ASSERT_EQ(vp.size(), 53);
  for (int i = 0; i < 53; ++i) EXPECT_DOUBLE_EQ(vp.locations[static_cast<std::size_t>(i)](0), i);
}

TEST(PlaceVirtualGrid, CornersOfUnitSquare) {
  const Hyperrectangle square(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1));
  const VirtualPoints vp = place_virtual_grid(square, {2, 2});
  ASSERT_EQ(vp.size(), 4);
  std::vector<std::pair<double, double>> seen;
  for (const auto& p : vp.locations) seen.emplace_back(p(0), p(1));
  std::sort(seen.begin(), seen.end());
  const std::vector<std::pair<double, double>> corners = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  EXPECT_EQ(seen, corners);
}

TEST(PlaceVirtualGrid, CapIsEnforced) {
  const Hyperrectangle cube(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 1, 1));
  EXPECT_THROW(place_virtual_grid(cube, {30, 30, 30}), ContractViolation);
  EXPECT_EQ(place_virtual_grid(cube, {10, 10, 100}).size(), 10000);
  EXPECT_THROW(place_virtual_grid(span(0, 1), {0}), ContractViolation);
  EXPECT_THROW(place_virtual_grid(span(0, 1), {3, 3}), ContractViolation);
}

TEST(ProbitLinkMean, Symmetry) {
  for (double v : {0.0, 0.1, 1.0, 100.0}) EXPECT_EQ(probit_link_mean(0.0, v, 0.01), 0.5);
}

TEST(ProbitLinkMean, Saturation) {
  EXPECT_EQ(probit_link_mean(1e6, 1.0, 0.01), 1.0);
  EXPECT_EQ(probit_link_mean(-1e6, 1.0, 0.01), 0.0);
}

TEST(ProbitLinkMean, MatchesMonteCarlo) {
  Gen gen(61);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 5; ++trial) {
    const double mu = testing::uniform(gen, -1.5, 1.5);
    const double var = testing::log_uniform(gen, 0.01, 4.0);
    const double s = testing::log_uniform(gen, 0.01, 1.0);
    const int samples = 1000000;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int i = 0; i < samples; ++i) {
      const double p = phi_cdf((mu + std::sqrt(var) * normal(gen)) / s);
      sum += p;
      sum2 += p * p;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sum2 / samples - mean * mean) / samples);
    EXPECT_NEAR(probit_link_mean(mu, var, s), mean, 3 * se) << mu << " " << var << " " << s;
  }
}

TEST(ProbitLinkMean, MonotoneInMeanAndBounded) {
  Gen gen(67);
  for (int trial = 0; trial < 200; ++trial) {
    const double var = testing::log_uniform(gen, 1e-4, 10);
    const double s = testing::log_uniform(gen, 1e-3, 1);
    const double a = testing::uniform(gen, -5, 5);
    const double b = a + testing::log_uniform(gen, 1e-6, 5);
    const double pa = probit_link_mean(a, var, s);
    const double pb = probit_link_mean(b, var, s);
    EXPECT_LE(pa, pb);
    EXPECT_GE(pa, 0.0);
    EXPECT_LE(pb, 1.0);
  }
}

TEST(EPFit, NoVirtualPointsIsTheExactPosterior) {
  Gen gen(71);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 1 + trial % 2;
    BinnedDataset data;
    for (int i = 0; i < 7; ++i) data.regions.push_back(testing::random_box(gen, d, -3, 3));
    data.y.resize(7);
    for (int i = 0; i < 7; ++i) data.y(i) = testing::uniform(gen, -2, 2);
    const auto hp = Hyperparameters::isotropic(testing::log_uniform(gen, 0.3, 3), testing::log_uniform(gen, 0.5, 3),
                                               d, testing::log_uniform(gen, 0.01, 0.5));
    const VirtualPoints none;
    const EPResult r = ep_fit(data, hp, none);
    EXPECT_TRUE(r.state.converged);
    EXPECT_NEAR(r.state.log_evidence(), log_marginal_likelihood(data, hp).value, 1e-8);
    std::vector<LatentPoint> queries;
    for (int q = 0; q < 8; ++q) queries.push_back(testing::random_box(gen, d, -4, 4).lower);
    const ConstrainedPosterior c = predict_constrained(r.state, data, hp, none, queries);
    const Posterior exact = predict_latent(data, hp, queries);
    for (int q = 0; q < 8; ++q) {
      EXPECT_NEAR(c.latent_mean(q), exact.mean(q), 1e-8);
      EXPECT_NEAR(c.latent_variance(q), exact.variance(q), 1e-8);
    }
  }
}

TEST(EPFit, SingleVirtualPointMatchesTiltedPosterior) {
  const BinnedDataset data = small_data();
  for (double where : {1.0, 2.5, 4.0, 6.0}) {
    for (double nu : {1e-2, 0.3}) {
      const auto hp = Hyperparameters::isotropic(1.4, 1.2, 1, 0.05);
      VirtualPoints vp;
      vp.locations = {at(where)};
      vp.nu = nu;
      EPConfig cfg;
      cfg.tolerance = 1e-12;
      cfg.max_sweeps = 200;
      const EPResult r = ep_fit(data, hp, vp, cfg);
      ASSERT_TRUE(r.state.converged);
      const Posterior prior = predict_latent(data, hp, {at(where)});
      const double s = nu * std::sqrt(hp.alpha);
      const TiltedMoments exact = tilted_by_quadrature(prior.mean(0), prior.variance(0), s);
      EXPECT_NEAR(r.at_virtual_points.latent_mean(0), exact.mean, 1e-8) << where << " " << nu;
      EXPECT_NEAR(r.at_virtual_points.latent_variance(0), exact.variance, 1e-8) << where << " " << nu;
      EXPECT_NEAR(r.state.log_evidence(), log_marginal_likelihood(data, hp).value + exact.log_z, 1e-8);
    }
  }
}

TEST(EPFit, DistantVirtualPointIsPushedPositive) {
  const BinnedDataset data = small_data();
  const auto hp = Hyperparameters::isotropic(1.4, 1.2, 1, 0.05);
  VirtualPoints vp;
  vp.locations = {at(2e3 * 1.2)};
  const EPResult r = ep_fit(data, hp, vp);
  ASSERT_TRUE(r.state.converged);
  const TiltedMoments exact = tilted_by_quadrature(0.0, hp.alpha, vp.nu * std::sqrt(hp.alpha));
  EXPECT_GE(r.at_virtual_points.latent_mean(0), 0.0);
  EXPECT_NEAR(r.at_virtual_points.latent_mean(0), exact.mean, 1e-6);
  EXPECT_NEAR(r.at_virtual_points.latent_variance(0), exact.variance, 1e-6);
}

TEST(EPFit, PredictionAtVirtualPointsAgreesWithFit) {
  const BinnedDataset data = small_data();
  const auto hp = Hyperparameters::isotropic(1.4, 1.2, 1, 0.05);
  const VirtualPoints vp = place_virtual_grid(span(-1, 8), {19});
  const EPResult r = ep_fit(data, hp, vp);
  ASSERT_TRUE(r.state.converged);
  const ConstrainedPosterior c = predict_constrained(r.state, data, hp, vp, vp.locations);
  for (Eigen::Index j = 0; j < vp.size(); ++j) {
    EXPECT_NEAR(c.latent_mean(j), r.at_virtual_points.latent_mean(j), 1e-6);
    EXPECT_NEAR(c.latent_variance(j), r.at_virtual_points.latent_variance(j), 1e-6);
    EXPECT_NEAR(c.link_mean(j), r.at_virtual_points.link_mean(j), 1e-6);
  }
}

TEST(EPFit, SiteParametersAreValid) {
  const BinnedDataset data = small_data();
  const auto hp = Hyperparameters::isotropic(1.4, 1.2, 1, 0.05);
  const VirtualPoints vp = place_virtual_grid(span(-1, 8), {19});
  const EPResult r = ep_fit(data, hp, vp);
  ASSERT_TRUE(r.state.converged);
  EXPECT_EQ(r.state.site_mu.size(), 19);
  for (Eigen::Index j = 0; j < vp.size(); ++j) {
    EXPECT_GT(r.state.site_sigma2(j), 0.0);
    EXPECT_TRUE(std::isfinite(r.state.site_mu(j)));
    EXPECT_TRUE(std::isfinite(r.state.site_log_Z(j)));
  }
  for (double p : r.at_virtual_points.link_mean) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(EPFit, EvidenceSettlesAtConvergence) {
  const BinnedDataset data = small_data();
  const auto hp = Hyperparameters::isotropic(1.4, 1.2, 1, 0.05);
  const VirtualPoints vp = place_virtual_grid(span(-1, 8), {19});
  const EPResult r = ep_fit(data, hp, vp);
  ASSERT_TRUE(r.state.converged);
  const auto& h = r.state.log_evidence_history;
  ASSERT_GE(h.size(), 6u);
  for (std::size_t i = h.size() - 5; i < h.size(); ++i) {
    EXPECT_TRUE(std::isfinite(h[i]));
    EXPECT_GE(h[i], h[i - 1] - 1e-6);
  }
}

TEST(EPFit, SweepLimitFlagsUnconverged) {
  const BinnedDataset data = small_data();
  const auto hp = Hyperparameters::isotropic(1.4, 1.2, 1, 0.05);
  EPConfig cfg;
  cfg.max_sweeps = 1;
  const EPResult r = ep_fit(data, hp, place_virtual_grid(span(-1, 8), {19}), cfg);
  EXPECT_FALSE(r.state.converged);
  EXPECT_EQ(r.state.sweeps, 1);
  EXPECT_TRUE(r.at_virtual_points.latent_mean.allFinite());
}

TEST(EPFit, WorksWithoutObservations) {
  BinnedDataset empty;
  empty.y.resize(0);
  const auto hp = Hyperparameters::isotropic(2.0, 1.0, 1, 0.1);
  VirtualPoints vp;
  vp.locations = {at(0.0)};
  vp.nu = 0.2;
  const EPResult r = ep_fit(empty, hp, vp);
  const TiltedMoments exact = tilted_by_quadrature(0.0, 2.0, 0.2 * std::sqrt(2.0));
  EXPECT_NEAR(r.at_virtual_points.latent_mean(0), exact.mean, 1e-6);
}

TEST(EPFit, TwoDimensionalGrid) {
  BinnedDataset data;
  data.regions = {Hyperrectangle(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)),
                  Hyperrectangle(Eigen::Vector2d(2, 2), Eigen::Vector2d(3, 3))};
  data.y = Eigen::Vector2d(1.0, -0.2);
  const auto hp = Hyperparameters::isotropic(1.0, 1.0, 2, 0.01);
  const Hyperrectangle domain(Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 3));
  const VirtualPoints vp = place_virtual_grid(domain, {7, 7});
  const EPResult r = ep_fit(data, hp, vp);
  EXPECT_TRUE(r.state.converged);
  const Posterior plain = predict_latent(data, hp, vp.locations);
  EXPECT_GT(r.at_virtual_points.latent_mean.minCoeff(), plain.mean.minCoeff());
}

TEST(EPFit, MismatchedStateIsRejected) {
  const BinnedDataset data = small_data();
  const auto hp = Hyperparameters::isotropic(1.4, 1.2, 1, 0.05);
  const EPResult r = ep_fit(data, hp, place_virtual_grid(span(-1, 8), {19}));
  EXPECT_THROW(predict_constrained(r.state, data, hp, place_virtual_grid(span(-1, 8), {5}), {at(0)}),
               ContractViolation);
}

class DipDataset : public ::testing::Test {
 protected:
  void SetUp() override {
    data = dip_reference_data().dataset();
    vp = place_virtual_grid(dip_domain(), {53});
    unconstrained = fit(data, default_init(data));
  }

  std::vector<double> candidates() const {
    std::vector<double> out;
    for (double l = 1.0; l <= 30.0; l *= 1.05) out.push_back(l);
    return out;
  }

  BinnedDataset data;
  VirtualPoints vp;
  FitResult unconstrained;
};

TEST_F(DipDataset, UnconstrainedMeanGoesNegative) {
  ASSERT_TRUE(unconstrained.converged);
  const Posterior p = predict_latent(data, unconstrained.hyperparameters, vp.locations);
  EXPECT_LT(p.mean.minCoeff(), 0.0);
}

TEST_F(DipDataset, ConstrainedLengthscaleIsShorter) {
  const Hyperparameters c = select_lengthscale_ep(data, unconstrained.hyperparameters, vp, candidates());
  EXPECT_LT(c.lengthscales(0), unconstrained.hyperparameters.lengthscales(0));
}

TEST_F(DipDataset, ConstrainedMeanStaysNonNegative) {
  const Hyperparameters c = select_lengthscale_ep(data, unconstrained.hyperparameters, vp, candidates());
  const EPResult r = ep_fit(data, c, vp);
  EXPECT_TRUE(r.state.converged);
  EXPECT_LE(r.state.sweeps, 100);
  EXPECT_GE(r.at_virtual_points.latent_mean.minCoeff(), -0.01 * std::sqrt(c.alpha));
  const auto& h = r.state.log_evidence_history;
  ASSERT_GE(h.size(), 6u);
  for (std::size_t i = h.size() - 5; i < h.size(); ++i) EXPECT_GE(h[i], h[i - 1] - 1e-6);
}

}  // namespace
}  // namespace bgp
