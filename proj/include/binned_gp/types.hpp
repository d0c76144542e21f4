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

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "binned_gp/errors.hpp"

namespace bgp {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Closed integration interval [s, t]. Degenerate t == s is allowed.
template <typename Scalar>
struct IntervalT {
  Scalar s{0};
  Scalar t{0};

  Scalar width() const { return t - s; }
};

/// Axis-aligned integration domain, one interval per input dimension.
template <typename Scalar>
struct HyperrectangleT {
  VectorX<Scalar> lower;
  VectorX<Scalar> upper;

  HyperrectangleT() = default;
  HyperrectangleT(VectorX<Scalar> lo, VectorX<Scalar> hi)
      : lower(std::move(lo)), upper(std::move(hi)) {
    detail::require(lower.size() == upper.size(),
                    "hyperrectangle: lower/upper dimension mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      detail::require(upper(i) >= lower(i),
                      "hyperrectangle: upper bound below lower bound");
    }
  }

  static HyperrectangleT from_intervals(const std::vector<IntervalT<Scalar>>& intervals) {
    VectorX<Scalar> lo(static_cast<Eigen::Index>(intervals.size()));
    VectorX<Scalar> hi(lo.size());
    for (std::size_t i = 0; i < intervals.size(); ++i) {
      lo(static_cast<Eigen::Index>(i)) = intervals[i].s;
      hi(static_cast<Eigen::Index>(i)) = intervals[i].t;
    }
    return HyperrectangleT(std::move(lo), std::move(hi));
  }

  Eigen::Index dims() const { return lower.size(); }
  IntervalT<Scalar> interval(Eigen::Index i) const { return {lower(i), upper(i)}; }
  Scalar volume() const { return (upper - lower).prod(); }
  VectorX<Scalar> centroid() const { return (lower + upper) / Scalar(2); }
};

/// Hyperparameters of the latent exponentiated-quadratic kernel
///   k(u, u') = alpha * prod_i exp(-(u_i - u'_i)^2 / l_i^2)
/// plus the Gaussian observation-noise variance.
///
/// Lengthscales follow the convention above, with no factor 2 in the
/// denominator. A lengthscale l_std in the usual exp(-d^2 / (2 l_std^2))
/// form corresponds to l = sqrt(2) * l_std; see from_standard_lengthscales.
template <typename Scalar>
struct HyperparametersT {
  Scalar alpha{1};
  VectorX<Scalar> lengthscales;
  Scalar noise_variance{0};

  Eigen::Index dims() const { return lengthscales.size(); }

  void validate() const {
    detail::require(std::isfinite(static_cast<double>(alpha)) && alpha > Scalar(0),
                    "hyperparameters: alpha must be positive");
    detail::require(lengthscales.size() > 0, "hyperparameters: no lengthscales");
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
      detail::require(std::isfinite(static_cast<double>(lengthscales(i))) &&
                          lengthscales(i) > Scalar(0),
                      "hyperparameters: lengthscales must be positive");
    }
    detail::require(std::isfinite(static_cast<double>(noise_variance)) &&
                        noise_variance >= Scalar(0),
                    "hyperparameters: noise variance must be non-negative");
  }

  static HyperparametersT isotropic(Scalar alpha, Scalar lengthscale, Eigen::Index dims,
                                    Scalar noise_variance = Scalar(0)) {
    HyperparametersT hp;
    hp.alpha = alpha;
    hp.lengthscales = VectorX<Scalar>::Constant(dims, lengthscale);
    hp.noise_variance = noise_variance;
    return hp;
  }

  static HyperparametersT from_standard_lengthscales(Scalar alpha,
                                                     const VectorX<Scalar>& standard,
                                                     Scalar noise_variance) {
    HyperparametersT hp;
    hp.alpha = alpha;
    hp.lengthscales = standard * std::sqrt(Scalar(2));
    hp.noise_variance = noise_variance;
    return hp;
  }
};

using Interval = IntervalT<double>;
using Hyperrectangle = HyperrectangleT<double>;
using Hyperparameters = HyperparametersT<double>;
using LatentPoint = Eigen::VectorXd;

std::string describe(const Hyperparameters& hp);

}  // namespace bgp
