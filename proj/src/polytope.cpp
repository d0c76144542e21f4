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

#include "binned_gp/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binned_gp/kernel_core.hpp"

namespace bgp {

Eigen::Index RegionApproximation::dims() const {
  if (kind == ApproximationKind::points) return points.rows();
  return rectangles.empty() ? 0 : rectangles.front().dims();
}

Eigen::Index RegionApproximation::feature_count() const {
  return kind == ApproximationKind::points ? points.cols()
                                           : static_cast<Eigen::Index>(rectangles.size());
}

// ---------------------------------------------------------------------------
// Points.

Eigen::MatrixXd thin_poisson_disc(const Eigen::MatrixXd& points, double radius) {
  detail::require(radius >= 0.0, "thin_poisson_disc: radius must be non-negative");
  if (radius == 0.0) return points;
  const double r2 = radius * radius;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](Eigen::Index k) {
      return (points.col(i) - points.col(k)).squaredNorm() >= r2;
    });
    if (clear) kept.push_back(i);
  }
  Eigen::MatrixXd out(points.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = points.col(kept[j]);
  return out;
}

RegionApproximation thin_poisson_disc(RegionApproximation approx, std::optional<double> radius) {
  detail::require(approx.kind == ApproximationKind::points,
                  "thin_poisson_disc: expected a point approximation");
  const auto n = static_cast<double>(approx.points.cols());
  const auto d = static_cast<double>(approx.points.rows());
  const double r = radius ? *radius : 0.5 * std::pow(approx.source_volume / n, 1.0 / d);
  approx.points = thin_poisson_disc(approx.points, r);
  return approx;
}

namespace {

void require_kind(const RegionApproximation& a, const RegionApproximation& b,
                  ApproximationKind kind, const char* what) {
  if (a.kind != kind || b.kind != kind) {
    throw ContractViolation(std::string(what) + ": approximation kind mismatch");
  }
}

}  // namespace

double cov_points(const RegionApproximation& a, const RegionApproximation& b,
                  const Hyperparameters& hp) {
  require_kind(a, b, ApproximationKind::points, "cov_points");
  detail::require(a.points.cols() > 0 && b.points.cols() > 0, "cov_points: empty point set");
  detail::require(a.points.rows() == hp.dims() && b.points.rows() == hp.dims(),
                  "cov_points: dimension mismatch");
  const Eigen::ArrayXd inv_l2 = hp.lengthscales.array().square().inverse();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.points.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.points.cols(); ++j) {
      sum += std::exp(-((a.points.col(i) - b.points.col(j)).array().square() * inv_l2).sum());
    }
  }
  const double weight = a.source_volume * b.source_volume /
                        (static_cast<double>(a.points.cols()) * static_cast<double>(b.points.cols()));
  return hp.alpha * weight * sum;
}

Eigen::VectorXd grad_points(const RegionApproximation& a, const RegionApproximation& b,
                            const Hyperparameters& hp, double dL_dK) {
  require_kind(a, b, ApproximationKind::points, "grad_points");
  detail::require(a.points.rows() == hp.dims() && b.points.rows() == hp.dims(),
                  "grad_points: dimension mismatch");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(hp.dims() + 1);
  for (Eigen::Index i = 0; i < a.points.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.points.cols(); ++j) {
      sum += eq_kernel_grad(a.points.col(i), b.points.col(j), hp);
    }
  }
  const double weight = a.source_volume * b.source_volume /
                        (static_cast<double>(a.points.cols()) * static_cast<double>(b.points.cols()));
  return dL_dK * weight * sum;
}

// ---------------------------------------------------------------------------
// Rectangles.

namespace {

// Axis-aligned grid over a bounding box with a boolean "free interior cell"
// mask, stored with axis 0 fastest.
class CellGrid {
 public:
  CellGrid(const Eigen::VectorXd& origin, const Eigen::VectorXd& step,
           const std::vector<int>& extent)
      : origin_(origin), step_(step), extent_(extent), stride_(extent.size()) {
    std::size_t total = 1;
    for (std::size_t k = 0; k < extent_.size(); ++k) {
      stride_[k] = total;
      total *= static_cast<std::size_t>(extent_[k]);
    }
    free_.assign(total, 0);
  }

  std::size_t dims() const { return extent_.size(); }
  std::size_t cell_count() const { return free_.size(); }
  int extent(std::size_t k) const { return extent_[k]; }

  std::size_t index(const std::vector<int>& cell) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < cell.size(); ++k) idx += stride_[k] * static_cast<std::size_t>(cell[k]);
    return idx;
  }
  std::vector<int> unravel(std::size_t idx) const {
    std::vector<int> cell(extent_.size());
    for (std::size_t k = 0; k < extent_.size(); ++k) {
      cell[k] = static_cast<int>(idx % static_cast<std::size_t>(extent_[k]));
      idx /= static_cast<std::size_t>(extent_[k]);
    }
    return cell;
  }

  bool is_free(std::size_t idx) const { return free_[idx] != 0; }
  void set_free(std::size_t idx, bool value) { free_[idx] = value ? 1 : 0; }

  // True when every cell of the box [lo, hi) is free.
  bool box_free(const std::vector<int>& lo, const std::vector<int>& hi) const {
    std::vector<int> cell = lo;
    while (true) {
      if (!free_[index(cell)]) return false;
      std::size_t k = 0;
      for (; k < cell.size(); ++k) {
        if (++cell[k] < hi[k]) break;
        cell[k] = lo[k];
      }
      if (k == cell.size()) return true;
    }
  }

  void mark_box(const std::vector<int>& lo, const std::vector<int>& hi) {
    std::vector<int> cell = lo;
    while (true) {
      free_[index(cell)] = 0;
      std::size_t k = 0;
      for (; k < cell.size(); ++k) {
        if (++cell[k] < hi[k]) break;
        cell[k] = lo[k];
      }
      if (k == cell.size()) return;
    }
  }

  Hyperrectangle to_rectangle(const std::vector<int>& lo, const std::vector<int>& hi) const {
    const auto d = static_cast<Eigen::Index>(dims());
    Eigen::VectorXd lower(d);
    Eigen::VectorXd upper(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      lower(k) = origin_(k) + step_(k) * lo[static_cast<std::size_t>(k)];
      upper(k) = origin_(k) + step_(k) * hi[static_cast<std::size_t>(k)];
    }
    return Hyperrectangle(std::move(lower), std::move(upper));
  }

  const Eigen::VectorXd& origin() const { return origin_; }
  const Eigen::VectorXd& step() const { return step_; }

 private:
  Eigen::VectorXd origin_;
  Eigen::VectorXd step_;
  std::vector<int> extent_;
  std::vector<std::size_t> stride_;
  std::vector<char> free_;
};

struct Box {
  std::vector<int> lo;
  std::vector<int> hi;
  std::size_t cells = 0;
};

// Marks a cell free when all 2^d of its corners lie inside the region.
template <typename Region>
CellGrid rasterize(const Region& region, const RectangleFill& options) {
  detail::require(options.max_rectangles >= 1, "fill_rectangles: need at least one rectangle");
  detail::require(options.resolution >= 8, "fill_rectangles: resolution must be at least 8 cells per axis");
  const Eigen::VectorXd lo = region.lower_bound();
  const Eigen::VectorXd hi = region.upper_bound();
  const Eigen::Index d = lo.size();
  const bool shifted = options.shift.size() != 0;
  detail::require(!shifted || options.shift.size() == d, "fill_rectangles: shift dimension mismatch");

  const Eigen::VectorXd step = (hi - lo) / options.resolution;
  if (!(step.minCoeff() > 0.0)) {
    throw DataError("fill_rectangles: region has an empty bounding box; no interior cells");
  }
  const Eigen::VectorXd origin = shifted ? Eigen::VectorXd(lo - options.shift.cwiseProduct(step)) : lo;
  std::vector<int> extent(static_cast<std::size_t>(d), options.resolution + (shifted ? 1 : 0));
  CellGrid grid(origin, step, extent);

  std::vector<int> corner_extent(extent);
  for (auto& e : corner_extent) ++e;
  CellGrid corners(origin, step, corner_extent);
  Eigen::VectorXd p(d);
  for (std::size_t idx = 0; idx < corners.cell_count(); ++idx) {
    const std::vector<int> c = corners.unravel(idx);
    for (Eigen::Index k = 0; k < d; ++k) p(k) = origin(k) + step(k) * c[static_cast<std::size_t>(k)];
    corners.set_free(idx, region.contains(p));
  }
  for (std::size_t idx = 0; idx < grid.cell_count(); ++idx) {
    const std::vector<int> c = grid.unravel(idx);
    // Corner lattice box [c, c + 2) holds the 2^d corners of cell c.
    std::vector<int> upper(c);
    for (auto& u : upper) u += 2;
    grid.set_free(idx, corners.box_free(c, upper));
  }
  return grid;
}

Box largest_box_1d(const CellGrid& grid) {
  Box best;
  int start = 0;
  for (int i = 0; i <= grid.extent(0); ++i) {
    const bool free = i < grid.extent(0) && grid.is_free(static_cast<std::size_t>(i));
    if (free) continue;
    if (static_cast<std::size_t>(i - start) > best.cells) best = {{start}, {i}, static_cast<std::size_t>(i - start)};
    start = i + 1;
  }
  return best;
}

// Maximal rectangle of free cells via the histogram-stack method.
Box largest_box_2d(const CellGrid& grid) {
  const int nx = grid.extent(0);
  const int ny = grid.extent(1);
  std::vector<int> height(static_cast<std::size_t>(nx), 0);
  Box best;
  std::vector<int> stack;
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      height[static_cast<std::size_t>(x)] =
          grid.is_free(grid.index({x, y})) ? height[static_cast<std::size_t>(x)] + 1 : 0;
    }
    stack.clear();
    for (int x = 0; x <= nx; ++x) {
      const int h = x < nx ? height[static_cast<std::size_t>(x)] : 0;
      while (!stack.empty() && height[static_cast<std::size_t>(stack.back())] >= h) {
        const int top = height[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        const int left = stack.empty() ? 0 : stack.back() + 1;
        const auto area = static_cast<std::size_t>(top) * static_cast<std::size_t>(x - left);
        if (area > best.cells) best = {{left, y - top + 1}, {x, y + 1}, area};
      }
      stack.push_back(x);
    }
  }
  return best;
}

// Grows a box from a seed cell one layer at a time, cycling over the axes
// and both directions, while the new layer is entirely free.
Box grow_from(const CellGrid& grid, const std::vector<int>& seed) {
  const std::size_t d = grid.dims();
  Box box{seed, seed, 1};
  for (auto& h : box.hi) ++h;
  bool grew = true;
  while (grew) {
    grew = false;
    for (std::size_t k = 0; k < d; ++k) {
      if (box.lo[k] > 0) {
        std::vector<int> lo = box.lo;
        std::vector<int> hi = box.hi;
        lo[k] = box.lo[k] - 1;
        hi[k] = box.lo[k];
        if (grid.box_free(lo, hi)) {
          --box.lo[k];
          grew = true;
        }
      }
      if (box.hi[k] < grid.extent(k)) {
        std::vector<int> lo = box.lo;
        std::vector<int> hi = box.hi;
        lo[k] = box.hi[k];
        hi[k] = box.hi[k] + 1;
        if (grid.box_free(lo, hi)) {
          ++box.hi[k];
          grew = true;
        }
      }
    }
  }
  box.cells = 1;
  for (std::size_t k = 0; k < d; ++k) box.cells *= static_cast<std::size_t>(box.hi[k] - box.lo[k]);
  return box;
}

constexpr std::size_t kMaxSeeds = 512;

Box largest_box_sweep(const CellGrid& grid) {
  std::vector<std::size_t> free_cells;
  for (std::size_t idx = 0; idx < grid.cell_count(); ++idx) {
    if (grid.is_free(idx)) free_cells.push_back(idx);
  }
  Box best;
  if (free_cells.empty()) return best;
  const std::size_t stride = std::max<std::size_t>(1, free_cells.size() / kMaxSeeds);
  for (std::size_t i = 0; i < free_cells.size(); i += stride) {
    Box b = grow_from(grid, grid.unravel(free_cells[i]));
    if (b.cells > best.cells) best = std::move(b);
  }
  return best;
}

template <typename Region>
RegionApproximation fill_rectangles_impl(const Region& region, const RectangleFill& options) {
  CellGrid grid = rasterize(region, options);
  RegionApproximation out;
  out.kind = ApproximationKind::rectangles;
  out.source_volume = region.volume();
  out.covered_volume = 0.0;

  bool any_free = false;
  for (std::size_t idx = 0; idx < grid.cell_count() && !any_free; ++idx) any_free = grid.is_free(idx);
  if (!any_free) {
    throw DataError("fill_rectangles: no interior cells at resolution " +
                    std::to_string(options.resolution) + "; increase the grid resolution");
  }

  for (int n = 0; n < options.max_rectangles; ++n) {
    Box box;
    switch (grid.dims()) {
      case 1: box = largest_box_1d(grid); break;
      case 2: box = largest_box_2d(grid); break;
      default: box = largest_box_sweep(grid); break;
    }
    if (box.cells == 0) break;
    grid.mark_box(box.lo, box.hi);
    out.rectangles.push_back(grid.to_rectangle(box.lo, box.hi));
    out.covered_volume += out.rectangles.back().volume();
  }
  return out;
}

}  // namespace

RegionApproximation fill_rectangles(const Polytope& polytope, const RectangleFill& options) {
  if (!(polytope.volume() > 0.0)) throw DataError("fill_rectangles: polytope has zero volume");
  return fill_rectangles_impl(polytope, options);
}

RegionApproximation fill_rectangles(const Ball& ball, const RectangleFill& options) {
  detail::require(ball.radius > 0.0, "fill_rectangles: ball radius must be positive");
  return fill_rectangles_impl(ball, options);
}

double cov_rectangles(const RegionApproximation& a, const RegionApproximation& b,
                      const Hyperparameters& hp) {
  require_kind(a, b, ApproximationKind::rectangles, "cov_rectangles");
  if (!(a.covered_volume > 0.0) || !(b.covered_volume > 0.0)) {
    throw ContractViolation("cov_rectangles: zero covered volume");
  }
  double sum = 0.0;
  for (const auto& ra : a.rectangles) {
    for (const auto& rb : b.rectangles) sum += integral_cov(ra, rb, hp);
  }
  return sum * (a.source_volume / a.covered_volume) * (b.source_volume / b.covered_volume);
}

Eigen::VectorXd grad_rectangles(const RegionApproximation& a, const RegionApproximation& b,
                                const Hyperparameters& hp, double dL_dK) {
  require_kind(a, b, ApproximationKind::rectangles, "grad_rectangles");
  if (!(a.covered_volume > 0.0) || !(b.covered_volume > 0.0)) {
    throw ContractViolation("grad_rectangles: zero covered volume");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(hp.dims() + 1);
  for (const auto& ra : a.rectangles) {
    for (const auto& rb : b.rectangles) sum += integral_cov_grad(ra, rb, hp);
  }
  return dL_dK * sum * (a.source_volume / a.covered_volume) * (b.source_volume / b.covered_volume);
}

double cov_approx(const RegionApproximation& a, const RegionApproximation& b,
                  const Hyperparameters& hp) {
  if (a.kind != b.kind) throw ContractViolation("cov_approx: approximation kind mismatch");
  return a.kind == ApproximationKind::points ? cov_points(a, b, hp) : cov_rectangles(a, b, hp);
}

// ---------------------------------------------------------------------------
// Gram assembly and prediction.

ApproximationCovariance::ApproximationCovariance(std::vector<RegionApproximation> regions)
    : regions_(std::move(regions)) {
  for (const auto& r : regions_) {
    if (r.kind != regions_.front().kind) {
      throw ContractViolation("ApproximationCovariance: mixed approximation kinds");
    }
  }
}

Eigen::Index ApproximationCovariance::dims() const {
  return regions_.empty() ? 0 : regions_.front().dims();
}

Eigen::MatrixXd ApproximationCovariance::gram(const Hyperparameters& hp,
                                              std::vector<Eigen::MatrixXd>* grads) const {
  const Eigen::Index n = size();
  Eigen::MatrixXd k(n, n);
  if (grads != nullptr) grads->assign(hp.dims() + 1, Eigen::MatrixXd(n, n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto& a = regions_[static_cast<std::size_t>(i)];
      const auto& b = regions_[static_cast<std::size_t>(j)];
      if (grads == nullptr) {
        k(i, j) = k(j, i) = cov_approx(a, b, hp);
        continue;
      }
      const Eigen::VectorXd g = a.kind == ApproximationKind::points ? grad_points(a, b, hp, 1.0)
                                                                    : grad_rectangles(a, b, hp, 1.0);
      k(i, j) = k(j, i) = hp.alpha * g(0);
      for (Eigen::Index p = 0; p < g.size(); ++p) (*grads)[p](i, j) = (*grads)[p](j, i) = g(p);
    }
  }
  return k;
}

Posterior predict_approx(const std::vector<RegionApproximation>& train, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& noise_scale, const Hyperparameters& hp,
                         const std::vector<RegionApproximation>& queries) {
  hp.validate();
  const auto n = static_cast<Eigen::Index>(train.size());
  const auto m = static_cast<Eigen::Index>(queries.size());
  detail::require(y.size() == n && noise_scale.size() == n, "predict_approx: length mismatch");
  Eigen::VectorXd prior(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    prior(j) = cov_approx(queries[static_cast<std::size_t>(j)], queries[static_cast<std::size_t>(j)], hp);
  }
  if (n == 0) return {Eigen::VectorXd::Zero(m), prior};
  Eigen::MatrixXd k = ApproximationCovariance(train).gram(hp, nullptr);
  k.diagonal() += hp.noise_variance * noise_scale;
  Eigen::MatrixXd cross(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      cross(i, j) = cov_approx(train[static_cast<std::size_t>(i)], queries[static_cast<std::size_t>(j)], hp);
    }
  }
  return GaussianSolver(std::move(k), y, true).predict(cross, prior);
}

}  // namespace bgp
