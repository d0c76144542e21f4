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

// Approximate covariances between regions that are not axis-aligned boxes.
//
// A region is anything with a volume, a membership test and a bounding box;
// polytopes (unions of simplexes) and Euclidean balls are provided. Regions
// are approximated either by uniformly sampled points, combined with the
// latent kernel, or by a greedy set of interior hyperrectangles, combined
// with the closed-form integral kernel and rescaled for the uncovered volume.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "binned_gp/errors.hpp"
#include "binned_gp/gp_regression.hpp"
#include "binned_gp/types.hpp"

namespace bgp {

/// d-simplex stored as a d x (d+1) matrix, one vertex per column.
template <typename Scalar>
struct SimplexT {
  MatrixX<Scalar> vertices;

  SimplexT() = default;
  explicit SimplexT(MatrixX<Scalar> v) : vertices(std::move(v)) {
    detail::require(vertices.cols() == vertices.rows() + 1,
                    "simplex: expected d x (d+1) vertex matrix");
  }

  Eigen::Index dims() const { return vertices.rows(); }
};

/// |det[v1 - v0, ..., vd - v0]| / d!.
template <typename Scalar>
Scalar simplex_volume(const SimplexT<Scalar>& s) {
  const Eigen::Index d = s.dims();
  if (d == 0) return Scalar(0);
  const MatrixX<Scalar> edges = s.vertices.rightCols(d).colwise() - s.vertices.col(0);
  Scalar factorial(1);
  for (Eigen::Index i = 2; i <= d; ++i) factorial *= Scalar(i);
  using std::abs;
  return abs(edges.determinant()) / factorial;
}

/// Uniform point inside a simplex.
///
/// With n = d + 1 vertices and u_1..u_d uniform on [0, 1), set l_0 = 1,
/// l_i = u_i^(1/(n-i)) and l_n = 0; the point is
///   sum_i (1 - l_{i+1}) (prod_{j<=i} l_j) v_i.
template <typename Scalar, typename Rng>
VectorX<Scalar> simplex_sample(const SimplexT<Scalar>& s, Rng& rng) {
  const Eigen::Index n = s.vertices.cols();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  VectorX<Scalar> point = VectorX<Scalar>::Zero(s.dims());
  Scalar running(1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar next(0);
    if (i + 1 < n) {
      using std::pow;
      next = pow(Scalar(uniform(rng)), Scalar(1) / Scalar(n - (i + 1)));
    }
    point += (Scalar(1) - next) * running * s.vertices.col(i);
    running *= next;
  }
  return point;
}

/// Barycentric coordinates of p with respect to s (sum to one).
template <typename Scalar, typename Derived>
VectorX<Scalar> barycentric(const SimplexT<Scalar>& s, const Eigen::MatrixBase<Derived>& p) {
  const Eigen::Index d = s.dims();
  VectorX<Scalar> out(d + 1);
  if (d == 0) {
    out(0) = Scalar(1);
    return out;
  }
  const MatrixX<Scalar> edges = s.vertices.rightCols(d).colwise() - s.vertices.col(0);
  const VectorX<Scalar> tail = edges.partialPivLu().solve(p - s.vertices.col(0));
  out(0) = Scalar(1) - tail.sum();
  out.tail(d) = tail;
  return out;
}

/// Union of interior-disjoint simplexes.
template <typename Scalar>
class PolytopeT {
 public:
  PolytopeT() = default;
  explicit PolytopeT(std::vector<SimplexT<Scalar>> simplexes) : simplexes_(std::move(simplexes)) {
    detail::require(!simplexes_.empty(), "polytope: no simplexes");
    const Eigen::Index d = simplexes_.front().dims();
    volume_ = Scalar(0);
    for (const auto& s : simplexes_) {
      detail::require(s.dims() == d, "polytope: simplexes differ in dimension");
      const Scalar v = simplex_volume(s);
      volumes_.push_back(v);
      volume_ += v;
      MatrixX<Scalar> inverse;
      if (v > Scalar(0)) {
        inverse = (s.vertices.rightCols(d).colwise() - s.vertices.col(0)).inverse();
      }
      inverses_.push_back(std::move(inverse));
    }
  }

  const std::vector<SimplexT<Scalar>>& simplexes() const { return simplexes_; }
  const std::vector<Scalar>& simplex_volumes() const { return volumes_; }
  Eigen::Index dims() const { return simplexes_.empty() ? 0 : simplexes_.front().dims(); }
  Scalar volume() const { return volume_; }

  template <typename Derived>
  bool contains(const Eigen::MatrixBase<Derived>& p, Scalar tolerance = Scalar(1e-10)) const {
    for (std::size_t k = 0; k < simplexes_.size(); ++k) {
      if (volumes_[k] <= Scalar(0)) continue;
      const VectorX<Scalar> tail =
          inverses_[k] * (p - simplexes_[k].vertices.col(0)).template cast<Scalar>();
      if (tail.minCoeff() >= -tolerance && tail.sum() <= Scalar(1) + tolerance) return true;
    }
    return false;
  }

  VectorX<Scalar> lower_bound() const {
    VectorX<Scalar> lo = simplexes_.front().vertices.rowwise().minCoeff();
    for (const auto& s : simplexes_) lo = lo.cwiseMin(s.vertices.rowwise().minCoeff());
    return lo;
  }
  VectorX<Scalar> upper_bound() const {
    VectorX<Scalar> hi = simplexes_.front().vertices.rowwise().maxCoeff();
    for (const auto& s : simplexes_) hi = hi.cwiseMax(s.vertices.rowwise().maxCoeff());
    return hi;
  }

 private:
  std::vector<SimplexT<Scalar>> simplexes_;
  std::vector<Scalar> volumes_;
  std::vector<MatrixX<Scalar>> inverses_;
  Scalar volume_{0};
};

/// Closed Euclidean ball.
template <typename Scalar>
struct BallT {
  VectorX<Scalar> center;
  Scalar radius{1};

  Eigen::Index dims() const { return center.size(); }

  Scalar volume() const {
    const double d = static_cast<double>(center.size());
    return Scalar(std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0)) *
           static_cast<Scalar>(std::pow(static_cast<double>(radius), d));
  }

  template <typename Derived>
  bool contains(const Eigen::MatrixBase<Derived>& p, Scalar tolerance = Scalar(1e-10)) const {
    return (p.template cast<Scalar>() - center).squaredNorm() <=
           radius * radius * (Scalar(1) + tolerance);
  }

  VectorX<Scalar> lower_bound() const { return center.array() - radius; }
  VectorX<Scalar> upper_bound() const { return center.array() + radius; }

  template <typename Rng>
  VectorX<Scalar> sample(Rng& rng) const {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    VectorX<Scalar> direction(dims());
    do {
      for (Eigen::Index i = 0; i < dims(); ++i) direction(i) = Scalar(normal(rng));
    } while (direction.squaredNorm() == Scalar(0));
    direction.normalize();
    const Scalar r = radius * Scalar(std::pow(uniform(rng), 1.0 / static_cast<double>(dims())));
    return center + r * direction;
  }
};

using Simplex = SimplexT<double>;
using Polytope = PolytopeT<double>;
using Ball = BallT<double>;

// ---------------------------------------------------------------------------
// Approximations.

enum class ApproximationKind { points, rectangles };

struct RegionApproximation {
  ApproximationKind kind = ApproximationKind::points;
  /// d x N sample locations (kind == points).
  Eigen::MatrixXd points;
  /// Interior rectangles (kind == rectangles).
  std::vector<Hyperrectangle> rectangles;
  /// Volume A of the approximated region.
  double source_volume = 0.0;
  /// Summed rectangle volume a (kind == rectangles), or A for points.
  double covered_volume = 0.0;

  Eigen::Index dims() const;
  Eigen::Index feature_count() const;
};

/// ceil(V rho) uniform samples in every simplex of volume V.
template <typename Rng>
RegionApproximation fill_points(const Polytope& polytope, double density, Rng& rng) {
  detail::require(density > 0.0, "fill_points: density must be positive");
  if (!(polytope.volume() > 0.0)) throw DataError("fill_points: polytope has zero volume");
  RegionApproximation out;
  out.kind = ApproximationKind::points;
  out.source_volume = polytope.volume();
  out.covered_volume = polytope.volume();
  std::vector<Eigen::VectorXd> samples;
  for (std::size_t k = 0; k < polytope.simplexes().size(); ++k) {
    const double v = polytope.simplex_volumes()[k];
    if (v <= 0.0) continue;
    const auto count = static_cast<std::int64_t>(std::ceil(v * density - 1e-9));
    for (std::int64_t i = 0; i < count; ++i) {
      samples.push_back(simplex_sample(polytope.simplexes()[k], rng));
    }
  }
  out.points.resize(polytope.dims(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.points.col(static_cast<Eigen::Index>(i)) = samples[i];
  }
  return out;
}

/// Exactly `count` uniform samples over the whole polytope.
template <typename Rng>
RegionApproximation fill_points_count(const Polytope& polytope, Eigen::Index count, Rng& rng) {
  detail::require(count >= 1, "fill_points_count: need at least one point");
  if (!(polytope.volume() > 0.0)) throw DataError("fill_points_count: polytope has zero volume");
  RegionApproximation out;
  out.kind = ApproximationKind::points;
  out.source_volume = polytope.volume();
  out.covered_volume = polytope.volume();
  const auto& volumes = polytope.simplex_volumes();
  std::discrete_distribution<std::size_t> pick(volumes.begin(), volumes.end());
  out.points.resize(polytope.dims(), count);
  for (Eigen::Index i = 0; i < count; ++i) {
    out.points.col(i) = simplex_sample(polytope.simplexes()[pick(rng)], rng);
  }
  return out;
}

/// Exactly `count` uniform samples in a ball.
template <typename Rng>
RegionApproximation fill_points(const Ball& ball, Eigen::Index count, Rng& rng) {
  detail::require(count >= 1, "fill_points: need at least one point");
  RegionApproximation out;
  out.kind = ApproximationKind::points;
  out.source_volume = ball.volume();
  out.covered_volume = out.source_volume;
  out.points.resize(ball.dims(), count);
  for (Eigen::Index i = 0; i < count; ++i) out.points.col(i) = ball.sample(rng);
  return out;
}

/// Greedy dart-throwing filter: keeps a point iff it lies at least `radius`
/// from every point kept before it. Columns are points.
Eigen::MatrixXd thin_poisson_disc(const Eigen::MatrixXd& points, double radius);

/// Thins a point approximation in place; the radius defaults to
/// 0.5 (A / N)^(1/d).
RegionApproximation thin_poisson_disc(RegionApproximation approx, std::optional<double> radius = {});

/// (A A' / (N N')) sum_ij k(x_i, x'_j).
double cov_points(const RegionApproximation& a, const RegionApproximation& b,
                  const Hyperparameters& hp);

/// d L / d (alpha, l_1..l_d) through cov_points, given d L / d k for this pair.
Eigen::VectorXd grad_points(const RegionApproximation& a, const RegionApproximation& b,
                            const Hyperparameters& hp, double dL_dK);

struct RectangleFill {
  int max_rectangles = 10;
  /// Grid cells per bounding-box edge.
  int resolution = 64;
  /// Optional per-axis shift of the grid origin, in cells, each in [0, 1).
  /// A shifted grid gets one extra cell per axis.
  Eigen::VectorXd shift;
};

RegionApproximation fill_rectangles(const Polytope& polytope, const RectangleFill& options);
RegionApproximation fill_rectangles(const Ball& ball, const RectangleFill& options);

/// sum_ij (A/a)(A'/a') k_FF(r_i, r'_j).
double cov_rectangles(const RegionApproximation& a, const RegionApproximation& b,
                      const Hyperparameters& hp);

Eigen::VectorXd grad_rectangles(const RegionApproximation& a, const RegionApproximation& b,
                                const Hyperparameters& hp, double dL_dK);

/// Dispatches on the approximation kind (both must agree).
double cov_approx(const RegionApproximation& a, const RegionApproximation& b,
                  const Hyperparameters& hp);

/// Gram matrix over a fixed set of approximations (one per region, shared
/// across all pairs), usable by log_marginal_likelihood and fit.
class ApproximationCovariance final : public CovarianceSource {
 public:
  explicit ApproximationCovariance(std::vector<RegionApproximation> regions);
  Eigen::Index size() const override { return static_cast<Eigen::Index>(regions_.size()); }
  Eigen::Index dims() const override;
  Eigen::MatrixXd gram(const Hyperparameters& hp,
                       std::vector<Eigen::MatrixXd>* grads) const override;
  const std::vector<RegionApproximation>& regions() const { return regions_; }

 private:
  std::vector<RegionApproximation> regions_;
};

/// Posterior mean/variance of integrals over `queries` given observed
/// integrals y over `train` (all approximations of one kind).
Posterior predict_approx(const std::vector<RegionApproximation>& train, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& noise_scale, const Hyperparameters& hp,
                         const std::vector<RegionApproximation>& queries);

}  // namespace bgp
