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

#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "binned_gp/types.hpp"

namespace bgp {

enum class ObservationKind { sum, mean };

/// Observed integrals y_i over regions_i. noise_scale_i multiplies the
/// model noise variance for observation i (empty means all ones).
struct BinnedDataset {
  std::vector<Hyperrectangle> regions;
  Eigen::VectorXd y;
  Eigen::VectorXd noise_scale;

  Eigen::Index size() const { return static_cast<Eigen::Index>(regions.size()); }
  Eigen::Index dims() const { return regions.empty() ? 0 : regions.front().dims(); }
  bool empty() const { return regions.empty(); }

  Eigen::VectorXd effective_noise_scale() const;
  void validate() const;
};

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  /// Half-width of the central interval at the given coverage level.
  Eigen::VectorXd half_width(double level = 0.95) const;
};

/// log marginal likelihood and its gradient with respect to
/// (log alpha, log l_1, ..., log l_d, log noise_variance).
struct LikelihoodResult {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

struct FitConfig {
  int max_iters = 1000;
  double tol_objective = 1e-6;
  double tol_gradient = 1e-5;
  bool optimize_noise = true;
  /// Largest change of any log-hyperparameter in one step.
  double max_log_step = 2.0;
};

struct FitResult {
  Hyperparameters hyperparameters;
  double log_marginal_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd gradient;
};

/// Anything that can produce a signal Gram matrix (without observation
/// noise) and its derivatives with respect to alpha and each lengthscale.
class CovarianceSource {
 public:
  virtual ~CovarianceSource() = default;
  virtual Eigen::Index size() const = 0;
  virtual Eigen::Index dims() const = 0;
  /// When grads is non-null it is resized to dims() + 1 matrices:
  /// dK/dalpha followed by dK/dl_j.
  virtual Eigen::MatrixXd gram(const Hyperparameters& hp,
                               std::vector<Eigen::MatrixXd>* grads) const = 0;
};

/// Integral covariances between hyperrectangles.
class RegionCovariance final : public CovarianceSource {
 public:
  explicit RegionCovariance(std::vector<Hyperrectangle> regions);
  Eigen::Index size() const override { return static_cast<Eigen::Index>(regions_.size()); }
  Eigen::Index dims() const override;
  Eigen::MatrixXd gram(const Hyperparameters& hp,
                       std::vector<Eigen::MatrixXd>* grads) const override;

 private:
  std::vector<Hyperrectangle> regions_;
};

/// Plain exponentiated-quadratic covariances between latent points.
class PointCovariance final : public CovarianceSource {
 public:
  explicit PointCovariance(std::vector<LatentPoint> points);
  Eigen::Index size() const override { return static_cast<Eigen::Index>(points_.size()); }
  Eigen::Index dims() const override;
  Eigen::MatrixXd gram(const Hyperparameters& hp,
                       std::vector<Eigen::MatrixXd>* grads) const override;
  const std::vector<LatentPoint>& points() const { return points_; }

 private:
  std::vector<LatentPoint> points_;
};

/// Cholesky factorization of a noisy Gram matrix together with K^{-1} y.
///
/// With allow_jitter the factorization is retried after adding
/// 1e-8 * trace(K) / n to the diagonal, growing tenfold, up to three times.
class GaussianSolver {
 public:
  GaussianSolver(Eigen::MatrixXd noisy_gram, const Eigen::VectorXd& y, bool allow_jitter);

  /// cross is n x m (training by query); prior_variance has m entries.
  Posterior predict(const Eigen::MatrixXd& cross, const Eigen::VectorXd& prior_variance) const;

  const Eigen::VectorXd& weights() const { return weights_; }
  double jitter() const { return jitter_; }
  double log_determinant() const;
  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd weights_;
  double jitter_ = 0.0;
};

Eigen::MatrixXd build_gram(const BinnedDataset& data, const Hyperparameters& hp);

/// Exact (no jitter) log marginal likelihood. Throws NumericalError when the
/// noisy Gram matrix is not positive definite.
LikelihoodResult log_marginal_likelihood(const BinnedDataset& data, const Hyperparameters& hp);
LikelihoodResult log_marginal_likelihood(const CovarianceSource& source,
                                         const Eigen::VectorXd& y,
                                         const Eigen::VectorXd& noise_scale,
                                         const Hyperparameters& hp);

/// Maximizes the log marginal likelihood in log-hyperparameter space.
FitResult fit(const BinnedDataset& data, const Hyperparameters& init,
              const FitConfig& config = {});
FitResult fit(const CovarianceSource& source, const Eigen::VectorXd& y,
              const Eigen::VectorXd& noise_scale, const Hyperparameters& init,
              const FitConfig& config = {});

/// Scale-aware starting point: l_i = range_i / 4, alpha = var(y / volume),
/// noise = alpha / 10.
Hyperparameters default_init(const BinnedDataset& data);

/// Best of `lengthscales` (applied to every dimension) by log marginal
/// likelihood, with alpha and noise taken from `base`.
Hyperparameters grid_search_lengthscale(const BinnedDataset& data, const Hyperparameters& base,
                                        const std::vector<double>& lengthscales);

Posterior predict_latent(const BinnedDataset& data, const Hyperparameters& hp,
                         const std::vector<LatentPoint>& points);
Posterior predict_integral(const BinnedDataset& data, const Hyperparameters& hp,
                           const std::vector<Hyperrectangle>& regions);

/// Posterior of a plain EQ GP observed at points (the centroid baseline).
Posterior predict_points(const std::vector<LatentPoint>& train, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& noise_scale, const Hyperparameters& hp,
                         const std::vector<LatentPoint>& queries);

/// noise_scale_i = 1 / n_i for bin means, 1 for bin sums.
BinnedDataset heteroscedastic_noise(BinnedDataset data, const Eigen::VectorXd& counts,
                                    ObservationKind kind = ObservationKind::mean);

/// Drops bins whose count is zero (their mean is undefined).
BinnedDataset exclude_empty_bins(const BinnedDataset& data, const Eigen::VectorXd& counts);

}  // namespace bgp
