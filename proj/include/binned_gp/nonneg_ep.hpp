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

#pragma once

// Non-negative latent function via probit "virtual point" likelihoods
//   p(z | f, V) = prod_j Phi(f(v_j) / nu)
// combined with the Gaussian integral observations, approximated by
// expectation propagation. The integral observations are conjugate and are
// conditioned on exactly; only the virtual points carry EP sites.
//
// nu is expressed in units of the latent prior standard deviation sqrt(alpha),
// so the probit steepness used internally is nu * sqrt(alpha).

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "binned_gp/gp_regression.hpp"
#include "binned_gp/types.hpp"

namespace bgp {

struct VirtualPoints {
  std::vector<LatentPoint> locations;
  double nu = 1e-2;

  Eigen::Index size() const { return static_cast<Eigen::Index>(locations.size()); }
};

/// One scaled-Gaussian site per virtual point: t_j(f) = Z_j N(f; mu_j, sigma2_j).
/// Sites never updated keep sigma2 = +inf and mu = 0.
struct EPState {
  Eigen::VectorXd site_log_Z;
  Eigen::VectorXd site_mu;
  Eigen::VectorXd site_sigma2;
  int sweeps = 0;
  bool converged = false;
  /// Site updates skipped because the cavity variance was not positive.
  int skipped_updates = 0;
  /// log Z_EP after every sweep.
  std::vector<double> log_evidence_history;

  double log_evidence() const {
    return log_evidence_history.empty() ? 0.0 : log_evidence_history.back();
  }
};

struct ConstrainedPosterior {
  Eigen::VectorXd latent_mean;
  Eigen::VectorXd latent_variance;
  /// E[Phi(f / nu)] under the latent Gaussian, in [0, 1].
  Eigen::VectorXd link_mean;
};

enum class PredictionMode { latent, probit_linked };

struct EPConfig {
  /// Weight of the freshly matched site against the previous one.
  double damping = 0.8;
  double tolerance = 1e-6;
  int max_sweeps = 100;
};

struct EPResult {
  EPState state;
  /// Posterior at the virtual points.
  ConstrainedPosterior at_virtual_points;
};

/// Evenly spaced lattice over `domain`, including both endpoints of every
/// axis (a single point sits at the lower bound).
VirtualPoints place_virtual_grid(const Hyperrectangle& domain, const std::vector<int>& counts,
                                 double nu = 1e-2, std::size_t cap = 10000);

EPResult ep_fit(const BinnedDataset& data, const Hyperparameters& hp, const VirtualPoints& vp,
                const EPConfig& config = {});

/// Best of `lengthscales` (applied to every dimension) by EP log evidence,
/// with alpha and noise taken from `base`. Candidates whose EP run fails
/// numerically are skipped.
Hyperparameters select_lengthscale_ep(const BinnedDataset& data, const Hyperparameters& base,
                                      const VirtualPoints& vp, const std::vector<double>& lengthscales,
                                      const EPConfig& config = {});

ConstrainedPosterior predict_constrained(const EPState& state, const BinnedDataset& data,
                                         const Hyperparameters& hp, const VirtualPoints& vp,
                                         const std::vector<LatentPoint>& queries);

/// Phi(mean / sqrt(scale^2 + variance)): the probit link averaged over a
/// Gaussian latent.
double probit_link_mean(double mean, double variance, double scale);

}  // namespace bgp
