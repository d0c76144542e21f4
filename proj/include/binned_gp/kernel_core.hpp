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

// Closed-form covariances of the exponentiated-quadratic latent kernel and
// of its definite integrals over intervals and hyperrectangles.
//
// Every function is a pure function of its arguments. Per-dimension "unit"
// helpers are evaluated with alpha = 1; the n-dimensional products apply the
// latent variance alpha exactly once, so the prior variance of f is alpha
// regardless of the input dimension.

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "binned_gp/errors.hpp"
#include "binned_gp/types.hpp"

namespace bgp {

template <typename Scalar>
inline constexpr Scalar kSqrtPi = Scalar(1.77245385090551602729816748334114518L);

// ---------------------------------------------------------------------------
// Support functions.

/// g(z) = z sqrt(pi) erf(z) + exp(-z^2). Even, g(0) = 1.
template <typename Scalar>
Scalar g_support(Scalar z) {
  using std::erf;
  using std::exp;
  return z * kSqrtPi<Scalar> * erf(z) + exp(-z * z);
}

/// h(z) = z sqrt(pi)/2 erf(z) + exp(-z^2). Even.
template <typename Scalar>
Scalar h_support(Scalar z) {
  using std::erf;
  using std::exp;
  return z * kSqrtPi<Scalar> / Scalar(2) * erf(z) + exp(-z * z);
}

/// d(z) = sqrt(pi)/2 erf(z) - z exp(-z^2). Odd; d(z) is the derivative of
/// l * sqrt(pi)/2 * erf(z0 / l) with respect to l, written in z = z0 / l.
template <typename Scalar>
Scalar d_support(Scalar z) {
  using std::erf;
  using std::exp;
  return kSqrtPi<Scalar> / Scalar(2) * erf(z) - z * exp(-z * z);
}

namespace detail {

// g(|z|) - |z| sqrt(pi): the part of g that decays to zero.
template <typename Scalar>
Scalar g_tail(Scalar z) {
  using std::abs;
  using std::erfc;
  using std::exp;
  const Scalar a = abs(z);
  return exp(-a * a) - a * kSqrtPi<Scalar> * erfc(a);
}

// h(|z|) - |z| sqrt(pi)/2.
template <typename Scalar>
Scalar h_tail(Scalar z) {
  using std::abs;
  using std::erfc;
  using std::exp;
  const Scalar a = abs(z);
  return exp(-a * a) - a * kSqrtPi<Scalar> / Scalar(2) * erfc(a);
}

// erf(a) + erf(b) for a + b >= 0, without cancellation when the arguments
// have opposite signs and large magnitude.
template <typename Scalar>
Scalar erf_pair_sum(Scalar a, Scalar b) {
  using std::erf;
  using std::erfc;
  if (a >= Scalar(0) && b >= Scalar(0)) return erf(a) + erf(b);
  if (a < Scalar(0)) return erfc(-a) - erfc(b);
  return erfc(-b) - erfc(a);
}

template <typename Scalar>
Scalar overlap(const IntervalT<Scalar>& a, const IntervalT<Scalar>& b) {
  using std::max;
  using std::min;
  return max(Scalar(0), min(a.t, b.t) - max(a.s, b.s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Latent kernel.

template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar eq_kernel(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& u2,
                 const HyperparametersT<Scalar>& hp) {
  detail::require(u.size() == u2.size() && u.size() == hp.dims(),
                  "eq_kernel: dimension mismatch");
  using std::exp;
  const Scalar r2 = ((u - u2).array() / hp.lengthscales.array()).square().sum();
  return hp.alpha * exp(-r2);
}

/// Gradient of eq_kernel with respect to (alpha, l_1, ..., l_d).
template <typename Scalar, typename DerivedA, typename DerivedB>
VectorX<Scalar> eq_kernel_grad(const Eigen::MatrixBase<DerivedA>& u,
                               const Eigen::MatrixBase<DerivedB>& u2,
                               const HyperparametersT<Scalar>& hp) {
  const Scalar k = eq_kernel(u, u2, hp);
  VectorX<Scalar> grad(hp.dims() + 1);
  grad(0) = k / hp.alpha;
  const auto& l = hp.lengthscales.array();
  grad.tail(hp.dims()) =
      k * Scalar(2) * (u - u2).array().square() / (l * l * l);
  return grad;
}

// ---------------------------------------------------------------------------
// One-dimensional integral kernels.

/// Covariance between the integrals over a and b:
///   alpha l^2 / 2 [g((t-s')/l) + g((t'-s)/l) - g((t-t')/l) - g((s-s')/l)].
///
/// The linear growth of the four g terms cancels to 2 * overlap(a, b) / l
/// exactly, so it is taken out analytically and only the decaying tails are
/// summed (positive and negative groups separately).
template <typename Scalar>
Scalar integral_cov_1d(const IntervalT<Scalar>& a, const IntervalT<Scalar>& b, Scalar alpha, Scalar l) {
  const Scalar positive = detail::g_tail((a.t - b.s) / l) + detail::g_tail((b.t - a.s) / l);
  const Scalar negative = detail::g_tail((a.t - b.t) / l) + detail::g_tail((a.s - b.s) / l);
  const Scalar linear = l * kSqrtPi<Scalar> * detail::overlap(a, b);
  return alpha * (linear + l * l / Scalar(2) * (positive - negative));
}

/// Covariance between the integral over a and the latent value at tprime:
///   alpha sqrt(pi) l / 2 [erf((t-t')/l) + erf((t'-s)/l)].
template <typename Scalar>
Scalar cross_cov_1d(const IntervalT<Scalar>& a, Scalar tprime, Scalar alpha, Scalar l) {
  return alpha * kSqrtPi<Scalar> * l / Scalar(2) *
         detail::erf_pair_sum((a.t - tprime) / l, (tprime - a.s) / l);
}

/// d integral_cov_1d / d l = alpha l [h((t-s')/l) + h((t'-s)/l) - h((t-t')/l) - h((s-s')/l)].
template <typename Scalar>
Scalar integral_cov_grad_l_1d(const IntervalT<Scalar>& a, const IntervalT<Scalar>& b, Scalar alpha,
                     Scalar l) {
  const Scalar positive = detail::h_tail((a.t - b.s) / l) + detail::h_tail((b.t - a.s) / l);
  const Scalar negative = detail::h_tail((a.t - b.t) / l) + detail::h_tail((a.s - b.s) / l);
  const Scalar linear = kSqrtPi<Scalar> * detail::overlap(a, b);
  return alpha * (linear + l * (positive - negative));
}

/// d cross_cov_1d / d l = alpha [d((t-t')/l) + d((t'-s)/l)].
template <typename Scalar>
Scalar cross_cov_grad_l_1d(const IntervalT<Scalar>& a, Scalar tprime, Scalar alpha, Scalar l) {
  using std::exp;
  const Scalar za = (a.t - tprime) / l;
  const Scalar zb = (tprime - a.s) / l;
  const Scalar erf_part = kSqrtPi<Scalar> / Scalar(2) * detail::erf_pair_sum(za, zb);
  const Scalar exp_part = za * exp(-za * za) + zb * exp(-zb * zb);
  return alpha * (erf_part - exp_part);
}

/// Gradient of any of the kernels with respect to alpha: the kernel value
/// with the leading alpha removed.
template <typename Scalar>
Scalar grad_alpha(Scalar kernel_value, Scalar alpha) {
  detail::require(alpha > Scalar(0), "grad_alpha: alpha must be positive");
  return kernel_value / alpha;
}

// ---------------------------------------------------------------------------
// Products over dimensions.

namespace detail {

template <typename Scalar>
void require_dims(const HyperrectangleT<Scalar>& a, Eigen::Index d, const char* what) {
  require(a.dims() == d, std::string(what) + ": dimension mismatch");
}

// grad(0) = prod(values); grad(1 + j) = alpha * partials(j) * prod_{i != j} values(i).
template <typename Scalar>
VectorX<Scalar> product_rule(const VectorX<Scalar>& values, const VectorX<Scalar>& partials,
                             Scalar alpha) {
  const Eigen::Index d = values.size();
  VectorX<Scalar> prefix(d + 1);
  VectorX<Scalar> suffix(d + 1);
  prefix(0) = Scalar(1);
  suffix(d) = Scalar(1);
  for (Eigen::Index i = 0; i < d; ++i) prefix(i + 1) = prefix(i) * values(i);
  for (Eigen::Index i = d; i > 0; --i) suffix(i - 1) = suffix(i) * values(i - 1);
  VectorX<Scalar> grad(d + 1);
  grad(0) = prefix(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    grad(j + 1) = alpha * partials(j) * prefix(j) * suffix(j + 1);
  }
  return grad;
}

}  // namespace detail

template <typename Scalar>
Scalar integral_cov(const HyperrectangleT<Scalar>& a, const HyperrectangleT<Scalar>& b,
              const HyperparametersT<Scalar>& hp) {
  detail::require_dims(a, hp.dims(), "integral_cov");
  detail::require_dims(b, hp.dims(), "integral_cov");
  Scalar product = hp.alpha;
  for (Eigen::Index i = 0; i < hp.dims(); ++i) {
    product *= integral_cov_1d(a.interval(i), b.interval(i), Scalar(1), hp.lengthscales(i));
  }
  return product;
}

template <typename Scalar, typename Derived>
Scalar cross_cov(const HyperrectangleT<Scalar>& a, const Eigen::MatrixBase<Derived>& p,
                  const HyperparametersT<Scalar>& hp) {
  detail::require_dims(a, hp.dims(), "cross_cov");
  detail::require(p.size() == hp.dims(), "cross_cov: point dimension mismatch");
  Scalar product = hp.alpha;
  for (Eigen::Index i = 0; i < hp.dims(); ++i) {
    product *= cross_cov_1d(a.interval(i), Scalar(p(i)), Scalar(1), hp.lengthscales(i));
  }
  return product;
}

/// Gradient of integral_cov with respect to (alpha, l_1, ..., l_d).
template <typename Scalar>
VectorX<Scalar> integral_cov_grad(const HyperrectangleT<Scalar>& a, const HyperrectangleT<Scalar>& b,
                            const HyperparametersT<Scalar>& hp) {
  detail::require_dims(a, hp.dims(), "integral_cov_grad");
  detail::require_dims(b, hp.dims(), "integral_cov_grad");
  const Eigen::Index d = hp.dims();
  VectorX<Scalar> values(d);
  VectorX<Scalar> partials(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Scalar l = hp.lengthscales(i);
    values(i) = integral_cov_1d(a.interval(i), b.interval(i), Scalar(1), l);
    partials(i) = integral_cov_grad_l_1d(a.interval(i), b.interval(i), Scalar(1), l);
  }
  return detail::product_rule(values, partials, hp.alpha);
}

/// Gradient of cross_cov with respect to (alpha, l_1, ..., l_d).
template <typename Scalar, typename Derived>
VectorX<Scalar> cross_cov_grad(const HyperrectangleT<Scalar>& a,
                                const Eigen::MatrixBase<Derived>& p,
                                const HyperparametersT<Scalar>& hp) {
  detail::require_dims(a, hp.dims(), "cross_cov_grad");
  detail::require(p.size() == hp.dims(), "cross_cov_grad: point dimension mismatch");
  const Eigen::Index d = hp.dims();
  VectorX<Scalar> values(d);
  VectorX<Scalar> partials(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Scalar l = hp.lengthscales(i);
    values(i) = cross_cov_1d(a.interval(i), Scalar(p(i)), Scalar(1), l);
    partials(i) = cross_cov_grad_l_1d(a.interval(i), Scalar(p(i)), Scalar(1), l);
  }
  return detail::product_rule(values, partials, hp.alpha);
}

}  // namespace bgp
