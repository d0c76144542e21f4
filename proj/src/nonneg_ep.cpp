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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "binned_gp/kernel_core.hpp"
#include "binned_gp/special.hpp"

namespace bgp {

double probit_link_mean(double mean, double variance, double scale) {
  return normal_cdf(mean / std::sqrt(scale * scale + std::max(variance, 0.0)));
}

VirtualPoints place_virtual_grid(const Hyperrectangle& domain, const std::vector<int>& counts,
                                 double nu, std::size_t cap) {
  const Eigen::Index d = domain.dims();
  detail::require(static_cast<Eigen::Index>(counts.size()) == d,
                  "place_virtual_grid: one count per dimension required");
  detail::require(nu > 0.0, "place_virtual_grid: nu must be positive");
  std::size_t total = 1;
  for (int c : counts) {
    detail::require(c >= 1, "place_virtual_grid: counts must be at least 1");
    total *= static_cast<std::size_t>(c);
    if (total > cap) {
      throw ContractViolation("place_virtual_grid: " + std::to_string(total) +
                              "+ virtual points exceed the cap of " + std::to_string(cap) +
                              "; place virtual points manually where negativity is likely");
    }
  }
  VirtualPoints vp;
  vp.nu = nu;
  vp.locations.reserve(total);
  std::vector<int> index(static_cast<std::size_t>(d), 0);
  for (std::size_t n = 0; n < total; ++n) {
    LatentPoint p(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const int c = counts[static_cast<std::size_t>(k)];
      const double frac = c == 1 ? 0.0 : static_cast<double>(index[static_cast<std::size_t>(k)]) / (c - 1);
      p(k) = domain.lower(k) + frac * (domain.upper(k) - domain.lower(k));
    }
    vp.locations.push_back(std::move(p));
    for (std::size_t k = 0; k < index.size(); ++k) {
      if (++index[k] < counts[k]) break;
      index[k] = 0;
    }
  }
  return vp;
}

namespace {

// Joint prior covariance over [F(regions), f(virtual points)].
// Exact conditioning of the latent values at the virtual points (and any
// queries) on the Gaussian integral observations.
class DataConditioner {
 public:
  DataConditioner(const BinnedDataset& data, const Hyperparameters& hp) : data_(data), hp_(hp) {
    const Eigen::Index n = data.size();
    if (n == 0) {
      weights_.resize(0);
      log_likelihood_ = 0.0;
      return;
    }
    Eigen::MatrixXd k = RegionCovariance(data.regions).gram(hp, nullptr);
    k.diagonal() += hp.noise_variance * data.effective_noise_scale();
    llt_.compute(k);
    if (llt_.info() != Eigen::Success) {
      throw NumericalError("EP: Gram matrix of the observations is not positive definite at " + describe(hp));
    }
    const Eigen::VectorXd half = llt_.matrixL().solve(data.y);
    weights_ = llt_.matrixU().solve(half);
    log_likelihood_ = -0.5 * half.squaredNorm() - llt_.matrixLLT().diagonal().array().log().sum() -
                      0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  }

  // Whitened cross covariance L^{-1} K(F, points).
  Eigen::MatrixXd whitened(const std::vector<LatentPoint>& points) const {
    const Eigen::Index n = data_.size();
    Eigen::MatrixXd cross(n, static_cast<Eigen::Index>(points.size()));
    for (Eigen::Index c = 0; c < cross.cols(); ++c) {
      for (Eigen::Index i = 0; i < n; ++i) cross(i, c) = cross_cov(data_.regions[i], points[c], hp_);
    }
    if (n > 0) llt_.matrixL().solveInPlace(cross);
    return cross;
  }

  Eigen::VectorXd mean(const std::vector<LatentPoint>& points) const {
    const Eigen::Index n = data_.size();
    Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
    for (Eigen::Index c = 0; c < out.size(); ++c) {
      double v = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) v += cross_cov(data_.regions[i], points[c], hp_) * weights_(i);
      out(c) = v;
    }
    return out;
  }

  double log_likelihood() const { return log_likelihood_; }

 private:
  const BinnedDataset& data_;
  const Hyperparameters& hp_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd weights_;
  double log_likelihood_ = 0.0;
};

Eigen::MatrixXd point_covariance(const std::vector<LatentPoint>& a, const std::vector<LatentPoint>& b,
                                 const Hyperparameters& hp) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) k(i, j) = eq_kernel(a[i], b[j], hp);
  }
  return k;
}

// Factorization of B = I + S K S with S = diag(sqrt(tau)).
struct SiteSystem {
  Eigen::VectorXd sqrt_tau;
  Eigen::LLT<Eigen::MatrixXd> llt;

  SiteSystem(const Eigen::MatrixXd& k, const Eigen::VectorXd& tau) {
    sqrt_tau = tau.array().max(0.0).sqrt();
    Eigen::MatrixXd b = sqrt_tau.asDiagonal() * k * sqrt_tau.asDiagonal();
    b.diagonal().array() += 1.0;
    llt.compute(b);
    if (llt.info() != Eigen::Success) throw NumericalError("EP: site system is not positive definite");
  }

  // alpha with posterior mean = prior_mean + K alpha.
  Eigen::VectorXd alpha(const Eigen::MatrixXd& k, const Eigen::VectorXd& nu,
                        const Eigen::VectorXd& prior_mean) const {
    const Eigen::VectorXd rhs = sqrt_tau.cwiseProduct(k * nu + prior_mean);
    return nu - sqrt_tau.cwiseProduct(llt.solve(rhs));
  }

  // Rows of L^{-1} S C, whose squared column norms are the variance reduction.
  Eigen::MatrixXd reduce(const Eigen::MatrixXd& c) const {
    return llt.matrixL().solve(sqrt_tau.asDiagonal() * c);
  }

  double half_log_det_b() const { return llt.matrixLLT().diagonal().array().log().sum(); }
};

struct ProbitMoments {
  double log_z;
  double mean;
  double variance;
};

ProbitMoments match_probit(double cavity_mean, double cavity_var, double scale) {
  const double denom2 = scale * scale + cavity_var;
  const double denom = std::sqrt(denom2);
  const double z = cavity_mean / denom;
  const double ratio = normal_pdf_over_cdf(z);
  ProbitMoments out;
  out.log_z = log_normal_cdf(z);
  out.mean = cavity_mean + cavity_var * ratio / denom;
  out.variance = cavity_var - cavity_var * cavity_var * ratio * (z + ratio) / denom2;
  out.variance = std::max(out.variance, 1e-16 * cavity_var);
  return out;
}

// EP over the virtual-point sites against the data-conditioned Gaussian prior.
class EPSystem {
 public:
  EPSystem(const BinnedDataset& data, const Hyperparameters& hp, const VirtualPoints& vp)
      : m_(vp.size()), scale_(vp.nu * std::sqrt(hp.alpha)), conditioner_(data, hp) {
    const Eigen::MatrixXd a = conditioner_.whitened(vp.locations);
    prior_mean_ = conditioner_.mean(vp.locations);
    k_ = point_covariance(vp.locations, vp.locations, hp) - a.transpose() * a;
    k_ = 0.5 * (k_ + k_.transpose());
    tau_ = Eigen::VectorXd::Zero(m_);
    nu_ = Eigen::VectorXd::Zero(m_);
  }

  void set_sites(const Eigen::VectorXd& tau, const Eigen::VectorXd& nu) {
    tau_ = tau;
    nu_ = nu;
  }

  void refresh() {
    const SiteSystem sites(k_, tau_);
    const Eigen::MatrixXd v = sites.reduce(k_);
    sigma_ = k_ - v.transpose() * v;
    mu_ = prior_mean_ + k_ * sites.alpha(k_, nu_, prior_mean_);
  }

  double scale() const { return scale_; }
  const Eigen::VectorXd& tau() const { return tau_; }
  const Eigen::VectorXd& nu() const { return nu_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& prior() const { return k_; }
  const Eigen::VectorXd& prior_mean() const { return prior_mean_; }
  const DataConditioner& conditioner() const { return conditioner_; }

  // Returns the relative site change, or a negative value when skipped.
  double update_site(Eigen::Index j, double damping) {
    const double cavity_tau = 1.0 / sigma_(j, j) - tau_(j);
    if (!(cavity_tau > 0.0)) return -1.0;
    const double cavity_nu = mu_(j) / sigma_(j, j) - nu_(j);
    const double cavity_var = 1.0 / cavity_tau;
    const ProbitMoments mom = match_probit(cavity_nu * cavity_var, cavity_var, scale_);

    const double tau_new = std::max(1.0 / mom.variance - cavity_tau, 0.0);
    const double nu_new = mom.mean / mom.variance - cavity_nu;
    const double tau_old = tau_(j);
    const double nu_old = nu_(j);
    const double tau_upd = damping * tau_new + (1.0 - damping) * tau_old;
    const double nu_upd = damping * nu_new + (1.0 - damping) * nu_old;

    const double dt = tau_upd - tau_old;
    const double dn = nu_upd - nu_old;
    const Eigen::VectorXd s = sigma_.col(j);
    const double denom = 1.0 + dt * s(j);
    mu_ += ((dn - dt * mu_(j)) / denom) * s;
    sigma_.noalias() -= (dt / denom) * s * s.transpose();
    tau_(j) = tau_upd;
    nu_(j) = nu_upd;

    const double var_scale = 1.0 / (scale_ * scale_ + 1.0);
    return std::max(std::abs(dt) / (std::abs(tau_old) + var_scale),
                    std::abs(dn) / (std::abs(nu_old) + std::sqrt(var_scale)));
  }

  // log Z_EP: exact log likelihood of the integral observations plus the EP
  // evidence of the sites under the conditioned prior, written in natural
  // parameters so that nearly flat sites do not cancel catastrophically.
  double log_evidence(Eigen::VectorXd* site_log_z) const {
    const SiteSystem sites(k_, tau_);
    const Eigen::VectorXd p = nu_ - tau_.cwiseProduct(prior_mean_);
    double value = conditioner_.log_likelihood() - sites.half_log_det_b() + 0.5 * p.dot(sigma_ * p);

    site_log_z->setZero(m_);
    for (Eigen::Index j = 0; j < m_; ++j) {
      const double cavity_tau = 1.0 / sigma_(j, j) - tau_(j);
      if (!(cavity_tau > 0.0)) continue;
      const double cavity_var = 1.0 / cavity_tau;
      const double cavity_mean = (mu_(j) / sigma_(j, j) - nu_(j)) * cavity_var;
      const double log_zhat = log_normal_cdf(cavity_mean / std::sqrt(scale_ * scale_ + cavity_var));
      const double shifted = cavity_mean - prior_mean_(j);
      const double total_tau = tau_(j) + cavity_tau;
      value += log_zhat + 0.5 * std::log1p(tau_(j) / cavity_tau) - 0.5 * p(j) * p(j) / total_tau +
               0.5 * shifted * cavity_tau * (tau_(j) * shifted - 2.0 * p(j)) / total_tau;
      if (tau_(j) > 0.0) {
        const double site_var = 1.0 / tau_(j);
        const double diff = cavity_mean - nu_(j) / tau_(j);
        (*site_log_z)(j) = log_zhat + 0.5 * std::log(2.0 * std::numbers::pi * (site_var + cavity_var)) +
                           diff * diff / (2.0 * (site_var + cavity_var));
      }
    }
    return value;
  }

 private:
  Eigen::Index m_;
  double scale_;
  DataConditioner conditioner_;
  Eigen::VectorXd prior_mean_;
  Eigen::MatrixXd k_;
  Eigen::VectorXd tau_;
  Eigen::VectorXd nu_;
  Eigen::MatrixXd sigma_;
  Eigen::VectorXd mu_;
};

void require_inputs(const BinnedDataset& data, const Hyperparameters& hp, const VirtualPoints& vp) {
  data.validate();
  hp.validate();
  detail::require(vp.nu > 0.0, "ep: nu must be positive");
  detail::require(data.empty() || data.dims() == hp.dims(), "ep: dataset dimension mismatch");
  for (const auto& v : vp.locations) {
    detail::require(v.size() == hp.dims(), "ep: virtual point dimension mismatch");
  }
}

}  // namespace

EPResult ep_fit(const BinnedDataset& data, const Hyperparameters& hp, const VirtualPoints& vp,
                const EPConfig& config) {
  require_inputs(data, hp, vp);
  detail::require(config.damping > 0.0 && config.damping <= 1.0, "ep_fit: damping must be in (0, 1]");
  EPSystem system(data, hp, vp);
  system.refresh();

  EPResult result;
  EPState& state = result.state;
  const Eigen::Index m = vp.size();
  Eigen::VectorXd site_log_z = Eigen::VectorXd::Zero(m);

  if (m == 0) {
    state.converged = true;
    state.log_evidence_history.push_back(system.log_evidence(&site_log_z));
  }
  for (int sweep = 0; sweep < config.max_sweeps && m > 0; ++sweep) {
    double largest = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double change = system.update_site(j, config.damping);
      if (change < 0.0) {
        ++state.skipped_updates;
        largest = std::numeric_limits<double>::infinity();
      } else {
        largest = std::max(largest, change);
      }
    }
    system.refresh();
    state.sweeps = sweep + 1;
    state.log_evidence_history.push_back(system.log_evidence(&site_log_z));
    if (largest < config.tolerance) {
      state.converged = true;
      break;
    }
  }

  state.site_log_Z = site_log_z;
  state.site_mu.resize(m);
  state.site_sigma2.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double tau = system.tau()(j);
    const double nu = system.nu()(j);
    state.site_sigma2(j) = tau > 0.0 ? 1.0 / tau : std::numeric_limits<double>::infinity();
    state.site_mu(j) = tau > 0.0 ? nu / tau : 0.0;
  }

  ConstrainedPosterior& post = result.at_virtual_points;
  post.latent_mean = system.mu();
  post.latent_variance = system.sigma().diagonal().cwiseMax(0.0);
  post.link_mean.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    post.link_mean(j) = probit_link_mean(post.latent_mean(j), post.latent_variance(j), system.scale());
  }
  return result;
}

Hyperparameters select_lengthscale_ep(const BinnedDataset& data, const Hyperparameters& base,
                                      const VirtualPoints& vp, const std::vector<double>& lengthscales,
                                      const EPConfig& config) {
  detail::require(!lengthscales.empty(), "select_lengthscale_ep: no candidates");
  Hyperparameters best = base;
  double best_value = -std::numeric_limits<double>::infinity();
  for (double l : lengthscales) {
    Hyperparameters hp = base;
    hp.lengthscales.setConstant(l);
    try {
      const double value = ep_fit(data, hp, vp, config).state.log_evidence();
      if (std::isfinite(value) && value > best_value) {
        best_value = value;
        best = hp;
      }
    } catch (const NumericalError&) {
    }
  }
  if (!std::isfinite(best_value)) throw NumericalError("select_lengthscale_ep: every candidate failed");
  return best;
}

ConstrainedPosterior predict_constrained(const EPState& state, const BinnedDataset& data,
                                         const Hyperparameters& hp, const VirtualPoints& vp,
                                         const std::vector<LatentPoint>& queries) {
  require_inputs(data, hp, vp);
  const Eigen::Index m = vp.size();
  detail::require(state.site_mu.size() == m && state.site_sigma2.size() == m,
                  "predict_constrained: state does not match the virtual points");
  for (const auto& q : queries) {
    detail::require(q.size() == hp.dims(), "predict_constrained: query dimension mismatch");
  }

  EPSystem system(data, hp, vp);
  Eigen::VectorXd tau(m);
  Eigen::VectorXd nu(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double s2 = state.site_sigma2(j);
    tau(j) = std::isfinite(s2) && s2 > 0.0 ? 1.0 / s2 : 0.0;
    nu(j) = tau(j) * state.site_mu(j);
  }
  const SiteSystem sites(system.prior(), tau);
  const Eigen::VectorXd alpha = sites.alpha(system.prior(), nu, system.prior_mean());

  const auto count = static_cast<Eigen::Index>(queries.size());
  const Eigen::MatrixXd aq = system.conditioner().whitened(queries);
  const Eigen::MatrixXd av = system.conditioner().whitened(vp.locations);
  const Eigen::MatrixXd cross = point_covariance(vp.locations, queries, hp) - av.transpose() * aq;
  const Eigen::MatrixXd v = sites.reduce(cross);

  ConstrainedPosterior post;
  post.latent_mean = system.conditioner().mean(queries) + cross.transpose() * alpha;
  post.latent_variance = (Eigen::VectorXd::Constant(count, hp.alpha) - aq.colwise().squaredNorm().transpose() -
                          v.colwise().squaredNorm().transpose())
                             .cwiseMax(0.0);
  post.link_mean.resize(count);
  for (Eigen::Index c = 0; c < count; ++c) {
    post.link_mean(c) = probit_link_mean(post.latent_mean(c), post.latent_variance(c), system.scale());
  }
  return post;
}

}  // namespace bgp
