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

// Laplace mechanism for count histograms.

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Core>

#include "binned_gp/errors.hpp"

namespace bgp {

struct DPConfig {
  double epsilon = 1.0;
  /// Change of one bin count when one individual is added or removed.
  double sensitivity = 1.0;
  bool clamp_negative = false;

  void validate() const {
    detail::require(epsilon > 0.0, "dp: epsilon must be positive");
    detail::require(std::isfinite(sensitivity) && sensitivity > 0.0,
                    "dp: sensitivity must be positive");
  }
  double scale() const { return sensitivity / epsilon; }
};

/// Variance of the added noise, 2 (sensitivity / epsilon)^2.
double dp_noise_variance(const DPConfig& cfg);

/// One Laplace(0, scale) draw by inverting the CDF.
template <typename Rng>
double sample_laplace(double scale, Rng& rng) {
  // (0, 1) open on both ends so the log never sees 0.
  std::uniform_real_distribution<double> uniform(std::numeric_limits<double>::min(), 1.0);
  const double u = uniform(rng) - 0.5;
  const double magnitude = -scale * std::log1p(-2.0 * std::abs(u));
  return u < 0.0 ? -magnitude : magnitude;
}

/// y_i + Laplace(0, sensitivity / epsilon) independently per entry.
template <typename Rng>
Eigen::VectorXd privatize(const Eigen::VectorXd& y, const DPConfig& cfg, Rng& rng) {
  cfg.validate();
  const double scale = cfg.scale();
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    out(i) = y(i) + sample_laplace(scale, rng);
    if (cfg.clamp_negative && out(i) < 0.0) out(i) = 0.0;
  }
  return out;
}

}  // namespace bgp
