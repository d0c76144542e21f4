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

#include "binned_gp/gp_regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "binned_gp/kernel_core.hpp"

namespace bgp {

std::string describe(const Hyperparameters& hp) {
  std::ostringstream out;
  out.precision(6);
  out << "alpha=" << hp.alpha << " lengthscales=[";
  for (Eigen::Index i = 0; i < hp.lengthscales.size(); ++i) {
    out << (i ? "," : "") << hp.lengthscales(i);
  }
  out << "] noise_variance=" << hp.noise_variance;
  return out.str();
}

// ---------------------------------------------------------------------------
// Dataset and posterior helpers.

Eigen::VectorXd BinnedDataset::effective_noise_scale() const {
  if (noise_scale.size() == 0) return Eigen::VectorXd::Ones(size());
  return noise_scale;
}

void BinnedDataset::validate() const {
  if (y.size() != size()) throw ContractViolation("dataset: regions and y differ in length");
  if (noise_scale.size() != 0 && noise_scale.size() != size()) {
    throw ContractViolation("dataset: noise_scale length differs from regions");
  }
  for (const auto& r : regions) {
    if (r.dims() != dims()) throw ContractViolation("dataset: regions differ in dimension");
  }
  for (Eigen::Index i = 0; i < noise_scale.size(); ++i) {
    if (!(noise_scale(i) >= 0.0)) throw ContractViolation("dataset: negative noise scale");
  }
}

Eigen::VectorXd Posterior::half_width(double level) const {
  // Two-sided normal quantile by bisection on the CDF; level is almost
  // always 0.95, where this returns 1.959964.
  const double target = 0.5 + level / 2.0;
  double lo = 0.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::numbers::sqrt2) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) * variance.array().max(0.0).sqrt().matrix();
}

// ---------------------------------------------------------------------------
// Covariance sources.

RegionCovariance::RegionCovariance(std::vector<Hyperrectangle> regions)
    : regions_(std::move(regions)) {}

Eigen::Index RegionCovariance::dims() const {
  return regions_.empty() ? 0 : regions_.front().dims();
}

Eigen::MatrixXd RegionCovariance::gram(const Hyperparameters& hp,
                                       std::vector<Eigen::MatrixXd>* grads) const {
  const Eigen::Index n = size();
  Eigen::MatrixXd k(n, n);
  if (grads != nullptr) grads->assign(hp.dims() + 1, Eigen::MatrixXd(n, n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      if (grads == nullptr) {
        k(i, j) = k(j, i) = integral_cov(regions_[i], regions_[j], hp);
        continue;
      }
      const Eigen::VectorXd g = integral_cov_grad(regions_[i], regions_[j], hp);
      k(i, j) = k(j, i) = hp.alpha * g(0);
      for (Eigen::Index p = 0; p < g.size(); ++p) (*grads)[p](i, j) = (*grads)[p](j, i) = g(p);
    }
  }
  return k;
}

PointCovariance::PointCovariance(std::vector<LatentPoint> points) : points_(std::move(points)) {}

Eigen::Index PointCovariance::dims() const {
  return points_.empty() ? 0 : points_.front().size();
}

Eigen::MatrixXd PointCovariance::gram(const Hyperparameters& hp,
                                      std::vector<Eigen::MatrixXd>* grads) const {
  const Eigen::Index n = size();
  Eigen::MatrixXd k(n, n);
  if (grads != nullptr) grads->assign(hp.dims() + 1, Eigen::MatrixXd(n, n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      if (grads == nullptr) {
        k(i, j) = k(j, i) = eq_kernel(points_[i], points_[j], hp);
        continue;
      }
      const Eigen::VectorXd g = eq_kernel_grad(points_[i], points_[j], hp);
      k(i, j) = k(j, i) = hp.alpha * g(0);
      for (Eigen::Index p = 0; p < g.size(); ++p) (*grads)[p](i, j) = (*grads)[p](j, i) = g(p);
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Factorization.

namespace {

// Cholesky that also rejects pivots lost to rounding, so exactly singular
// matrices fail instead of producing an enormous negative log determinant.
bool factorize(const Eigen::MatrixXd& k, Eigen::LLT<Eigen::MatrixXd>& llt) {
  llt.compute(k);
  if (llt.info() != Eigen::Success) return false;
  const double eps = std::numeric_limits<double>::epsilon() * static_cast<double>(k.rows());
  const Eigen::VectorXd pivots = llt.matrixLLT().diagonal().array().square();
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    if (!(pivots(i) > eps * k(i, i))) return false;
  }
  return true;
}

}  // namespace

GaussianSolver::GaussianSolver(Eigen::MatrixXd noisy_gram, const Eigen::VectorXd& y,
                               bool allow_jitter) {
  const Eigen::Index n = noisy_gram.rows();
  bool ok = factorize(noisy_gram, llt_);
  if (!ok && allow_jitter && n > 0) {
    const double base = 1e-8 * std::max(noisy_gram.trace(), 0.0) / static_cast<double>(n);
    double jitter = base > 0.0 ? base : 1e-12;
    for (int attempt = 0; attempt < 3; ++attempt, jitter *= 10.0) {
      ok = factorize(noisy_gram + jitter * Eigen::MatrixXd::Identity(n, n), llt_);
      if (ok) {
        jitter_ = jitter;
        break;
      }
    }
  }
  if (!ok) {
    throw NumericalError("Gram matrix is not positive definite");
  }
  weights_ = llt_.solve(y);
}

Posterior GaussianSolver::predict(const Eigen::MatrixXd& cross,
                                  const Eigen::VectorXd& prior_variance) const {
  Posterior post;
  post.mean = cross.transpose() * weights_;
  const Eigen::MatrixXd v = llt_.matrixL().solve(cross);
  post.variance = prior_variance - v.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < post.variance.size(); ++i) {
    if (post.variance(i) < 0.0 && post.variance(i) > -1e-10 * std::max(1.0, prior_variance(i))) {
      post.variance(i) = 0.0;
    }
  }
  return post;
}

double GaussianSolver::log_determinant() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

// ---------------------------------------------------------------------------
// Marginal likelihood.

namespace {

void require_compatible(const BinnedDataset& data, const Hyperparameters& hp) {
  data.validate();
  hp.validate();
  if (!data.empty() && data.dims() != hp.dims()) {
    throw ContractViolation("dataset dimension " + std::to_string(data.dims()) +
                            " does not match hyperparameter dimension " +
                            std::to_string(hp.dims()));
  }
}

}  // namespace

Eigen::MatrixXd build_gram(const BinnedDataset& data, const Hyperparameters& hp) {
  require_compatible(data, hp);
  Eigen::MatrixXd k = RegionCovariance(data.regions).gram(hp, nullptr);
  k.diagonal() += hp.noise_variance * data.effective_noise_scale();
  return k;
}

LikelihoodResult log_marginal_likelihood(const CovarianceSource& source,
                                         const Eigen::VectorXd& y,
                                         const Eigen::VectorXd& noise_scale,
                                         const Hyperparameters& hp) {
  hp.validate();
  const Eigen::Index n = source.size();
  detail::require(y.size() == n, "log_marginal_likelihood: y length mismatch");
  detail::require(noise_scale.size() == n, "log_marginal_likelihood: noise_scale length mismatch");
  detail::require(n == 0 || source.dims() == hp.dims(),
                  "log_marginal_likelihood: dimension mismatch");

  std::vector<Eigen::MatrixXd> grads;
  Eigen::MatrixXd k = source.gram(hp, &grads);
  k.diagonal() += hp.noise_variance * noise_scale;

  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!factorize(k, llt)) {
    throw NumericalError("ill-conditioned model: Gram matrix not positive definite at " +
                         describe(hp) +
                         " (increase the noise variance or remove duplicate regions)");
  }
  const Eigen::VectorXd a = llt.solve(y);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  LikelihoodResult result;
  result.value = -0.5 * y.dot(a) - 0.5 * log_det -
                 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // dL/dtheta = 1/2 tr((a a^T - K^{-1}) dK/dtheta).
  const Eigen::MatrixXd inner =
      a * a.transpose() - llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::Index d = hp.dims();
  result.gradient.resize(d + 2);
  result.gradient(0) = 0.5 * inner.cwiseProduct(grads[0]).sum() * hp.alpha;
  for (Eigen::Index j = 0; j < d; ++j) {
    result.gradient(j + 1) = 0.5 * inner.cwiseProduct(grads[j + 1]).sum() * hp.lengthscales(j);
  }
  result.gradient(d + 1) =
      0.5 * (inner.diagonal().array() * noise_scale.array()).sum() * hp.noise_variance;
  return result;
}

LikelihoodResult log_marginal_likelihood(const BinnedDataset& data, const Hyperparameters& hp) {
  require_compatible(data, hp);
  return log_marginal_likelihood(RegionCovariance(data.regions), data.y,
                                 data.effective_noise_scale(), hp);
}

// ---------------------------------------------------------------------------
// Optimizer.

namespace {

struct LogParameters {
  Eigen::Index dims = 0;
  bool with_noise = false;

  Eigen::VectorXd pack(const Hyperparameters& hp) const {
    Eigen::VectorXd theta(dims + 1 + (with_noise ? 1 : 0));
    theta(0) = std::log(hp.alpha);
    theta.segment(1, dims) = hp.lengthscales.array().log().matrix();
    if (with_noise) theta(dims + 1) = std::log(hp.noise_variance);
    return theta;
  }

  Hyperparameters unpack(const Eigen::VectorXd& theta, double fixed_noise) const {
    Hyperparameters hp;
    hp.alpha = std::exp(theta(0));
    hp.lengthscales = theta.segment(1, dims).array().exp().matrix();
    hp.noise_variance = with_noise ? std::exp(theta(dims + 1)) : fixed_noise;
    return hp;
  }

  Eigen::VectorXd restrict(const Eigen::VectorXd& full_gradient) const {
    return full_gradient.head(dims + 1 + (with_noise ? 1 : 0));
  }
};

struct Evaluation {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  bool ok = false;
};

}  // namespace

FitResult fit(const CovarianceSource& source, const Eigen::VectorXd& y,
              const Eigen::VectorXd& noise_scale, const Hyperparameters& init,
              const FitConfig& config) {
  init.validate();
  LogParameters params{init.dims(), config.optimize_noise && init.noise_variance > 0.0};

  auto evaluate = [&](const Eigen::VectorXd& theta) {
    Evaluation e;
    const Hyperparameters hp = params.unpack(theta, init.noise_variance);
    if (!theta.allFinite()) return e;
    try {
      const LikelihoodResult r = log_marginal_likelihood(source, y, noise_scale, hp);
      if (!std::isfinite(r.value) || !r.gradient.allFinite()) return e;
      e.value = r.value;
      e.gradient = params.restrict(r.gradient);
      e.ok = true;
    } catch (const NumericalError&) {
    }
    return e;
  };

  Eigen::VectorXd theta = params.pack(init);
  Evaluation current = evaluate(theta);
  if (!current.ok) {
    throw NumericalError("log marginal likelihood is not finite at the initial point " +
                         describe(init));
  }

  FitResult result;
  result.hyperparameters = init;
  result.log_marginal_likelihood = current.value;
  result.gradient = current.gradient;
  if (config.max_iters <= 0) return result;

  // Quasi-Newton ascent: the search direction is the gradient preconditioned
  // by a BFGS estimate of the inverse negative Hessian, with backtracking.
  const Eigen::Index m = theta.size();
  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(m, m);
  bool identity = true;
  int iter = 0;
  bool converged = current.gradient.lpNorm<Eigen::Infinity>() < config.tol_gradient;

  while (!converged && iter < config.max_iters) {
    ++iter;
    Eigen::VectorXd direction = inv_hessian * current.gradient;
    if (direction.dot(current.gradient) <= 0.0) {
      inv_hessian.setIdentity();
      identity = true;
      direction = current.gradient;
    }
    const double largest = direction.lpNorm<Eigen::Infinity>();
    double step = largest > config.max_log_step ? config.max_log_step / largest : 1.0;
    const double slope = direction.dot(current.gradient);

    Evaluation next;
    Eigen::VectorXd candidate;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      candidate = theta + step * direction;
      next = evaluate(candidate);
      if (next.ok && next.value >= current.value + 1e-4 * step * slope) break;
      next.ok = false;
    }
    if (!next.ok) {
      if (identity) break;
      inv_hessian.setIdentity();
      identity = true;
      continue;
    }

    // BFGS update for the minimization of -L.
    const Eigen::VectorXd s = candidate - theta;
    const Eigen::VectorXd g_change = current.gradient - next.gradient;
    const double sy = s.dot(g_change);
    if (sy > 1e-12 * s.norm() * g_change.norm()) {
      if (identity) {
        inv_hessian *= sy / g_change.squaredNorm();
        identity = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(m, m) - rho * s * g_change.transpose();
      inv_hessian = left * inv_hessian * left.transpose() + rho * s * s.transpose();
    }

    const double change = next.value - current.value;
    theta = candidate;
    current = next;
    converged = std::abs(change) < config.tol_objective &&
                current.gradient.lpNorm<Eigen::Infinity>() < config.tol_gradient;
  }

  result.hyperparameters = params.unpack(theta, init.noise_variance);
  result.log_marginal_likelihood = current.value;
  result.gradient = current.gradient;
  result.iterations = iter;
  result.converged = converged;
  return result;
}

FitResult fit(const BinnedDataset& data, const Hyperparameters& init, const FitConfig& config) {
  require_compatible(data, init);
  detail::require(!data.empty(), "fit: empty dataset");
  return fit(RegionCovariance(data.regions), data.y, data.effective_noise_scale(), init, config);
}

Hyperparameters default_init(const BinnedDataset& data) {
  data.validate();
  detail::require(!data.empty(), "default_init: empty dataset");
  const Eigen::Index d = data.dims();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = -lo;
  Eigen::VectorXd density(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    lo = lo.cwiseMin(data.regions[i].lower);
    hi = hi.cwiseMax(data.regions[i].upper);
    const double volume = data.regions[i].volume();
    density(i) = volume > 0.0 ? data.y(i) / volume : data.y(i);
  }
  Hyperparameters hp;
  hp.lengthscales = ((hi - lo) / 4.0).cwiseMax(1e-6);
  const double mean = density.mean();
  double var = (density.array() - mean).square().mean();
  if (!(var > 0.0)) var = std::max(mean * mean, 1.0);
  hp.alpha = var;
  hp.noise_variance = 0.1 * var;
  return hp;
}

Hyperparameters grid_search_lengthscale(const BinnedDataset& data, const Hyperparameters& base,
                                        const std::vector<double>& lengthscales) {
  detail::require(!lengthscales.empty(), "grid_search_lengthscale: empty grid");
  Hyperparameters best = base;
  double best_value = -std::numeric_limits<double>::infinity();
  for (double l : lengthscales) {
    Hyperparameters hp = base;
    hp.lengthscales.setConstant(l);
    try {
      const double value = log_marginal_likelihood(data, hp).value;
      if (value > best_value) {
        best_value = value;
        best = hp;
      }
    } catch (const NumericalError&) {
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Prediction.

Posterior predict_latent(const BinnedDataset& data, const Hyperparameters& hp,
                         const std::vector<LatentPoint>& points) {
  require_compatible(data, hp);
  const Eigen::Index m = static_cast<Eigen::Index>(points.size());
  for (const auto& p : points) {
    detail::require(p.size() == hp.dims(), "predict_latent: point dimension mismatch");
  }
  const Eigen::VectorXd prior = Eigen::VectorXd::Constant(m, hp.alpha);
  if (data.empty()) return {Eigen::VectorXd::Zero(m), prior};

  Eigen::MatrixXd cross(data.size(), m);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < m; ++j) cross(i, j) = cross_cov(data.regions[i], points[j], hp);
  }
  return GaussianSolver(build_gram(data, hp), data.y, true).predict(cross, prior);
}

Posterior predict_integral(const BinnedDataset& data, const Hyperparameters& hp,
                           const std::vector<Hyperrectangle>& regions) {
  require_compatible(data, hp);
  const Eigen::Index m = static_cast<Eigen::Index>(regions.size());
  Eigen::VectorXd prior(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    detail::require(regions[j].dims() == hp.dims(), "predict_integral: region dimension mismatch");
    prior(j) = integral_cov(regions[j], regions[j], hp);
  }
  if (data.empty()) return {Eigen::VectorXd::Zero(m), prior};

  Eigen::MatrixXd cross(data.size(), m);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < m; ++j) cross(i, j) = integral_cov(data.regions[i], regions[j], hp);
  }
  return GaussianSolver(build_gram(data, hp), data.y, true).predict(cross, prior);
}

Posterior predict_points(const std::vector<LatentPoint>& train, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& noise_scale, const Hyperparameters& hp,
                         const std::vector<LatentPoint>& queries) {
  hp.validate();
  const Eigen::Index n = static_cast<Eigen::Index>(train.size());
  const Eigen::Index m = static_cast<Eigen::Index>(queries.size());
  detail::require(y.size() == n && noise_scale.size() == n, "predict_points: length mismatch");
  const Eigen::VectorXd prior = Eigen::VectorXd::Constant(m, hp.alpha);
  if (n == 0) return {Eigen::VectorXd::Zero(m), prior};

  Eigen::MatrixXd k = PointCovariance(train).gram(hp, nullptr);
  k.diagonal() += hp.noise_variance * noise_scale;
  Eigen::MatrixXd cross(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) cross(i, j) = eq_kernel(train[i], queries[j], hp);
  }
  return GaussianSolver(std::move(k), y, true).predict(cross, prior);
}

// ---------------------------------------------------------------------------
// Noise models.

BinnedDataset heteroscedastic_noise(BinnedDataset data, const Eigen::VectorXd& counts,
                                    ObservationKind kind) {
  data.validate();
  detail::require(counts.size() == data.size(), "heteroscedastic_noise: counts length mismatch");
  data.noise_scale.resize(data.size());
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (!(counts(i) > 0.0)) {
      throw DataError("heteroscedastic_noise: bin " + std::to_string(i) +
                      " has non-positive count");
    }
    data.noise_scale(i) = kind == ObservationKind::mean ? 1.0 / counts(i) : 1.0;
  }
  return data;
}

BinnedDataset exclude_empty_bins(const BinnedDataset& data, const Eigen::VectorXd& counts) {
  data.validate();
  detail::require(counts.size() == data.size(), "exclude_empty_bins: counts length mismatch");
  const Eigen::VectorXd scale = data.effective_noise_scale();
  BinnedDataset out;
  std::vector<double> y;
  std::vector<double> s;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (counts(i) > 0.0) {
      out.regions.push_back(data.regions[i]);
      y.push_back(data.y(i));
      s.push_back(scale(i));
    }
  }
  out.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  if (data.noise_scale.size() != 0) {
    out.noise_scale = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  }
  return out;
}

}  // namespace bgp
