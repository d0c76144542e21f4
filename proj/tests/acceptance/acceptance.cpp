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


// Acceptance run: one PASS/FAIL line per headline criterion. Exits non-zero
// when any line fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

#include "../test_support.hpp"
#include "binned_gp/bench.hpp"
#include "binned_gp/gp_regression.hpp"
#include "binned_gp/kernel_core.hpp"
#include "binned_gp/nonneg_ep.hpp"
#include "binned_gp/polytope.hpp"
#include "binned_gp/scenarios.hpp"

namespace bgp {
namespace {

using testing::Gen;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double relative_error(double value, double reference) {
  return std::abs(value - reference) / std::max(std::abs(reference), 1e-300);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1-D closed forms against adaptive quadrature of the EQ kernel.
Outcome kernel_exactness() {
  Gen gen(2026);
  double worst_ff = 0.0;
  double worst_ff_cross = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Interval a = testing::random_interval(gen, -5, 5);
    const Interval b = testing::random_interval(gen, -5, 5);
    const double tp = testing::uniform(gen, -6, 6);
    const double l = testing::log_uniform(gen, 0.1, 10);
    const double alpha = testing::log_uniform(gen, 0.1, 10);
    const double ff = integral_cov_1d(a, b, alpha, l);
    const double fx = cross_cov_1d(a, tp, alpha, l);
    worst_ff = std::max(worst_ff, std::abs(ff - testing::quad_integral(a, b, alpha, l)) / std::max(ff, 1e-10));
    worst_ff_cross =
        std::max(worst_ff_cross, std::abs(fx - testing::quad_cross(a, tp, alpha, l)) / std::max(fx, 1e-10));
  }
  return {worst_ff <= 1e-6 && worst_ff_cross <= 1e-6,
          fmt("max rel err kFF %.2e, kFf %.2e (limit 1e-6, 200 configs)", worst_ff, worst_ff_cross)};
}

// Central difference of f at x, Richardson-extrapolated over steps h and h/2.
// Values like exp(-c / l^2) with large c make a plain central difference
// inaccurate well beyond 1e-5.
double central_difference(const std::function<double(double)>& f, double x, double h) {
  auto d = [&](double s) { return (f(x + s) - f(x - s)) / (2 * s); };
  return (4 * d(h / 2) - d(h)) / 3;
}

// Relative agreement with a floor for gradients that vanish.
struct GradCheck {
  double worst = 0.0;
  void add(double analytic, double fd, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(fd), floor});
    worst = std::max(worst, std::abs(analytic - fd) / scale);
  }
};

Outcome gradient_suite() {
  Gen gen(7);
  GradCheck one_d;
  GradCheck n_d;
  GradCheck cloud;
  for (int trial = 0; trial < 100; ++trial) {
    {
      const Interval a = testing::random_interval(gen, -5, 5);
      const Interval b = testing::random_interval(gen, -5, 5);
      const double tp = testing::uniform(gen, -5, 5);
      const double l = testing::log_uniform(gen, 0.2, 10);
      const double alpha = testing::log_uniform(gen, 0.1, 10);
      const double h = 1e-4 * l;
      const double v = integral_cov_1d(a, b, alpha, l);
      one_d.add(integral_cov_grad_l_1d(a, b, alpha, l),
                central_difference([&](double x) { return integral_cov_1d(a, b, alpha, x); }, l, h), 1e-6 * v / l);
      const double cv = cross_cov_1d(a, tp, alpha, l);
      one_d.add(cross_cov_grad_l_1d(a, tp, alpha, l),
                central_difference([&](double x) { return cross_cov_1d(a, tp, alpha, x); }, l, h), 1e-6 * cv / l);
    }
    {
      const Eigen::Index d = 1 + trial % 4;
      Hyperparameters hp;
      hp.alpha = testing::log_uniform(gen, 0.1, 10);
      hp.lengthscales.resize(d);
      for (Eigen::Index k = 0; k < d; ++k) hp.lengthscales(k) = testing::log_uniform(gen, 0.3, 5);
      const Hyperrectangle a = testing::random_box(gen, d, -3, 3);
      const Hyperrectangle b = testing::random_box(gen, d, -3, 3);
      Eigen::VectorXd p(d);
      for (Eigen::Index k = 0; k < d; ++k) p(k) = testing::uniform(gen, -3, 3);
      const Eigen::VectorXd g = integral_cov_grad(a, b, hp);
      const Eigen::VectorXd gc = cross_cov_grad(a, p, hp);
      const double v = integral_cov(a, b, hp);
      const double cv = cross_cov(a, p, hp);
      auto with_alpha = [&](double x) {
        Hyperparameters q = hp;
        q.alpha = x;
        return q;
      };
      n_d.add(g(0), central_difference([&](double x) { return integral_cov(a, b, with_alpha(x)); }, hp.alpha,
                                       1e-4 * hp.alpha), 1e-12);
      n_d.add(gc(0), central_difference([&](double x) { return cross_cov(a, p, with_alpha(x)); }, hp.alpha,
                                        1e-4 * hp.alpha), 1e-12);
      for (Eigen::Index j = 0; j < d; ++j) {
        auto with_l = [&](double x) {
          Hyperparameters q = hp;
          q.lengthscales(j) = x;
          return q;
        };
        const double lj = hp.lengthscales(j);
        n_d.add(g(j + 1), central_difference([&](double x) { return integral_cov(a, b, with_l(x)); }, lj, 1e-4 * lj),
                1e-6 * v / lj);
        n_d.add(gc(j + 1), central_difference([&](double x) { return cross_cov(a, p, with_l(x)); }, lj, 1e-4 * lj),
                1e-6 * cv / lj);
      }
    }
    {
      const Eigen::Index d = 1 + trial % 3;
      auto cloud_of = [&](int n) {
        RegionApproximation r;
        r.kind = ApproximationKind::points;
        r.points.resize(d, n);
        for (Eigen::Index i = 0; i < r.points.size(); ++i) r.points(i) = testing::uniform(gen, -2, 2);
        r.source_volume = r.covered_volume = testing::uniform(gen, 0.5, 3);
        return r;
      };
      const RegionApproximation a = cloud_of(7);
      const RegionApproximation b = cloud_of(5);
      Hyperparameters hp;
      hp.alpha = testing::log_uniform(gen, 0.2, 5);
      hp.lengthscales.resize(d);
      for (Eigen::Index k = 0; k < d; ++k) hp.lengthscales(k) = testing::log_uniform(gen, 0.3, 4);
      const Eigen::VectorXd g = grad_points(a, b, hp, 1.0);
      auto with_alpha = [&](double x) {
        Hyperparameters q = hp;
        q.alpha = x;
        return q;
      };
      cloud.add(g(0), central_difference([&](double x) { return cov_points(a, b, with_alpha(x)); }, hp.alpha,
                                         1e-4 * hp.alpha), 1e-12);
      for (Eigen::Index k = 0; k < d; ++k) {
        auto with_l = [&](double x) {
          Hyperparameters q = hp;
          q.lengthscales(k) = x;
          return q;
        };
        const double lk = hp.lengthscales(k);
        cloud.add(g(k + 1), central_difference([&](double x) { return cov_points(a, b, with_l(x)); }, lk, 1e-4 * lk),
                  1e-7 * hp.alpha);
      }
    }
  }
  const double worst = std::max({one_d.worst, n_d.worst, cloud.worst});
  return {worst <= 1e-5, fmt("max rel err 1-D %.1e, n-D %.1e, point cloud %.1e (limit 1e-5, 100 configs each)",
                             one_d.worst, n_d.worst, cloud.worst)};
}

// Log marginal likelihood of the robot data at alpha 12.9, l 7.1, noise 0.6,
// from 30-digit quadrature.
constexpr double kRobotReferenceLogLik = -11.5687950802071980735694976114;

Outcome robot_reproduction() {
  const auto start = std::chrono::steady_clock::now();
  const BinnedDataset data = robot_reference_data().dataset();
  const auto hp = Hyperparameters::isotropic(12.9, 7.1, 1, 0.6);
  const Posterior p = predict_latent(data, hp, {Eigen::VectorXd::Constant(1, 5.0)});
  const double mean = p.mean(0);
  // Interval for a new noisy reading at t = 5.
  const double half_width = 1.959963984540054 * std::sqrt(p.variance(0) + hp.noise_variance);
  const FitResult r = fit(data, default_init(data));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool mean_ok = std::abs(mean - 4.87) <= 0.1;
  const bool width_ok = std::abs(half_width - 1.70) <= 0.1;
  const bool fit_ok = r.log_marginal_likelihood >= kRobotReferenceLogLik - 1e-3;
  return {mean_ok && width_ok && fit_ok && seconds < 1.0,
          fmt("mean %.4f (want 4.87 +- 0.1) %s; half-width %.4f (want 1.70 +- 0.1) %s; fitted L %.4f vs %.4f %s; "
              "%.3f s",
              mean, mean_ok ? "ok" : "MISS", half_width, width_ok ? "ok" : "MISS", r.log_marginal_likelihood,
              kRobotReferenceLogLik, fit_ok ? "ok" : "MISS", seconds)};
}

Outcome psd_property() {
  Gen gen(99);
  double worst = std::numeric_limits<double>::infinity();
  for (int set = 0; set < 50; ++set) {
    const Eigen::Index d = 1 + set % 4;
    const int n = 2 + static_cast<int>(gen() % 29);
    Hyperparameters hp;
    hp.alpha = testing::log_uniform(gen, 0.1, 10);
    hp.lengthscales.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) hp.lengthscales(k) = testing::log_uniform(gen, 0.1, 10);
    BinnedDataset data;
    for (int i = 0; i < n; ++i) data.regions.push_back(testing::random_box(gen, d, -5, 5));
    data.y = Eigen::VectorXd::Zero(n);
    hp.noise_variance = 0.0;
    const Eigen::MatrixXd k = build_gram(data, hp);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k, Eigen::EigenvaluesOnly).eigenvalues()(0);
    worst = std::min(worst, min_eig / k.trace());
  }
  return {worst >= -1e-8, fmt("min eigenvalue / trace %.2e over 50 sets (limit -1e-8)", worst)};
}

// Uniform draws from a ball: Gaussian direction, radius r U^(1/d).
Eigen::VectorXd ball_draw(const Ball& b, Gen& gen) {
  std::normal_distribution<double> normal;
  const Eigen::Index d = b.dims();
  Eigen::VectorXd x(d);
  for (Eigen::Index k = 0; k < d; ++k) x(k) = normal(gen);
  const double r = b.radius * std::pow(std::uniform_real_distribution<double>()(gen), 1.0 / static_cast<double>(d));
  return b.center + r * x.normalized();
}

Outcome sphere_covariance() {
  const auto start = std::chrono::steady_clock::now();
  const auto [small, large] = touching_balls();
  // Lengthscale 2 in the exp(-r^2 / (2 l^2)) convention, variance 3.
  const auto hp = Hyperparameters::isotropic(3.0, 2.0 * std::numbers::sqrt2, 4, 0.0);

  Gen gen(4);
  const int pairs = 4'000'000;
  double sum = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const Eigen::VectorXd x = ball_draw(small, gen);
    const Eigen::VectorXd y = ball_draw(large, gen);
    sum += hp.alpha * std::exp(-(x - y).squaredNorm() / (hp.lengthscales(0) * hp.lengthscales(0)));
  }
  const double reference = small.volume() * large.volume() * sum / pairs;

  double point_err = 0.0;
  double rect_err = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng = make_stream(static_cast<std::uint64_t>(s), 0);
    const RegionApproximation pa = fill_points(small, 10, rng);
    const RegionApproximation pb = fill_points(large, 10, rng);
    point_err += std::abs(cov_points(pa, pb, hp) - reference);
    RectangleFill fill;
    fill.max_rectangles = 10;
    fill.resolution = 16;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    fill.shift.resize(4);
    for (Eigen::Index k = 0; k < 4; ++k) fill.shift(k) = unit(rng);
    const RegionApproximation ra = fill_rectangles(small, fill);
    for (Eigen::Index k = 0; k < 4; ++k) fill.shift(k) = unit(rng);
    const RegionApproximation rb = fill_rectangles(large, fill);
    rect_err += std::abs(cov_rectangles(ra, rb, hp) - reference);
  }
  point_err /= seeds;
  rect_err /= seeds;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ref_ok = relative_error(reference, 314.0) <= 0.01;
  const bool order_ok = rect_err < point_err;
  const bool point_ok = relative_error(point_err, 50.0) <= 0.5;
  const bool rect_ok = relative_error(rect_err, 25.1) <= 0.5;
  return {ref_ok && order_ok && point_ok && rect_ok && seconds < 60.0,
          fmt("reference %.2f (4e6 pairs); MAE rectangles %.1f, points %.1f over 20 seeds; %.1f s", reference,
              rect_err, point_err, seconds)};
}

testing::TriangleRule rule_for(const Polytope& p, int split) {
  testing::TriangleRule rule;
  for (const auto& s : p.simplexes()) {
    testing::add_triangle_rule(s.vertices.col(0), s.vertices.col(1), s.vertices.col(2), split, rule);
  }
  return rule;
}

Outcome polygon_gram_convergence() {
  const std::vector<Polytope> sets = l_shaped_sets();
  const std::size_t n = sets.size();
  // Lengthscale 1 in the exp(-r^2 / (2 l^2)) convention.
  const auto hp = Hyperparameters::isotropic(1.0, std::numbers::sqrt2, 2, 0.0);
  std::vector<testing::TriangleRule> rules;
  for (const auto& p : sets) rules.push_back(rule_for(p, 1));
  Eigen::MatrixXd reference(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) reference(i, j) = testing::quad_rule_pair(rules[i], rules[j], 1.0, hp.lengthscales(0));
  }

  auto gram_error = [&](const std::vector<RegionApproximation>& approx) {
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) err += std::abs(cov_approx(approx[i], approx[j], hp) - reference(i, j));
    }
    return err / static_cast<double>(n * n);
  };

  const std::array<int, 4> counts{16, 32, 64, 128};
  std::vector<double> point_median;
  std::vector<double> rect_median;
  for (int count : counts) {
    std::vector<double> pe;
    std::vector<double> re;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng = make_stream(seed, static_cast<std::uint64_t>(count));
      std::vector<RegionApproximation> points;
      std::vector<RegionApproximation> rects;
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (const auto& p : sets) {
        points.push_back(fill_points_count(p, count, rng));
        RectangleFill fill;
        fill.max_rectangles = count;
        fill.resolution = 128;
        fill.shift = Eigen::Vector2d(unit(rng), unit(rng));
        rects.push_back(fill_rectangles(p, fill));
      }
      pe.push_back(gram_error(points));
      re.push_back(gram_error(rects));
    }
    point_median.push_back(median(pe));
    rect_median.push_back(median(re));
  }
  bool ok = true;
  std::string detail = "median MAE (points/rectangles):";
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c > 0 && (point_median[c] >= point_median[c - 1] || rect_median[c] >= rect_median[c - 1])) ok = false;
    if (rect_median[c] > point_median[c]) ok = false;
    detail += fmt(" %d: %.2e/%.2e", counts[c], point_median[c], rect_median[c]);
  }
  return {ok, detail};
}

Outcome dp_ordering() {
  bool ok = true;
  std::string detail = "runs with integral < centroid < simple RMSE:";
  for (std::optional<double> eps : {std::optional<double>(0.1), std::optional<double>(1.0), std::optional<double>()}) {
    BenchConfig cfg;
    cfg.scenario = Scenario::histogram;
    cfg.methods = {Method::simple, Method::centroid, Method::integral};
    cfg.repeats = 30;
    cfg.seed = 2;
    cfg.epsilon = eps;
    const BenchReport report = run_bench(cfg);
    int ordered = 0;
    for (const auto& row : report.repeats) {
      if (row[0].failed || row[1].failed || row[2].failed) continue;
      if (row[2].rmse < row[1].rmse && row[1].rmse < row[0].rmse) ++ordered;
    }
    if (ordered < 24) ok = false;
    detail += eps ? fmt(" eps=%g %d/30", *eps, ordered) : fmt(" eps=inf %d/30", ordered);
  }
  return {ok, detail + " (need 24/30)"};
}

Outcome ep_nonnegativity() {
  const BinnedDataset data = dip_reference_data().dataset();
  const VirtualPoints vp = place_virtual_grid(dip_domain(), {53});
  const FitResult unconstrained = fit(data, default_init(data));
  const Posterior free_fit = predict_latent(data, unconstrained.hyperparameters, vp.locations);
  const double free_min = free_fit.mean.minCoeff();

  std::vector<double> candidates;
  for (double l = 1.0; l <= 30.0; l *= 1.05) candidates.push_back(l);
  const Hyperparameters hp = select_lengthscale_ep(data, unconstrained.hyperparameters, vp, candidates);
  const EPResult r = ep_fit(data, hp, vp);
  const double constrained_min = r.at_virtual_points.latent_mean.minCoeff();
  const double bound = -0.01 * std::sqrt(hp.alpha);

  const EPResult none = ep_fit(data, unconstrained.hyperparameters, VirtualPoints{});
  const ConstrainedPosterior same =
      predict_constrained(none.state, data, unconstrained.hyperparameters, VirtualPoints{}, vp.locations);
  const double gap = std::max((same.latent_mean - free_fit.mean).lpNorm<Eigen::Infinity>(),
                              (same.latent_variance - free_fit.variance).lpNorm<Eigen::Infinity>());

  const bool ok = free_min < 0.0 && constrained_min >= bound && r.state.converged && r.state.sweeps <= 100 &&
                  none.state.converged && gap <= 1e-8;
  return {ok, fmt("unconstrained min %.3f; constrained min %.4f (bound %.4f, l %.2f vs %.2f); %d sweeps%s; "
                  "no-virtual-point gap %.1e",
                  free_min, constrained_min, bound, hp.lengthscales(0), unconstrained.hyperparameters.lengthscales(0),
                  r.state.sweeps, r.state.converged ? "" : " (not converged)", gap)};
}

// Which of 16 congruent sub-triangles of the unit right triangle holds (x, y).
int sub_triangle(double x, double y) {
  static const auto table = [] {
    std::array<int, 32> t{};
    t.fill(-1);
    int next = 0;
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; i + j <= 3; ++j) t[static_cast<std::size_t>(4 * i + j)] = next++;
    }
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; i + j <= 2; ++j) t[static_cast<std::size_t>(16 + 4 * i + j)] = next++;
    }
    return t;
  }();
  const double sx = 4 * x;
  const double sy = 4 * y;
  const int i = std::clamp(static_cast<int>(sx), 0, 3);
  const int j = std::clamp(static_cast<int>(sy), 0, 3 - i);
  const bool inverted = (sx - i) + (sy - j) > 1.0 && i + j <= 2;
  return table[static_cast<std::size_t>((inverted ? 16 : 0) + 4 * i + j)];
}

Outcome simplex_uniformity() {
  Rng rng = make_stream(5, 0);
  Eigen::Matrix<double, 2, 3> v;
  v << 0, 1, 0, 0, 0, 1;
  const Simplex s(v);
  const int n = 100000;
  std::vector<int> counts(16, 0);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd p = simplex_sample(s, rng);
    sum += p;
    ++counts[static_cast<std::size_t>(sub_triangle(p(0), p(1)))];
  }
  double chi2 = 0.0;
  const double expected = n / 16.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(15), chi2));
  const Eigen::Vector2d centroid = sum / n;
  const double offset = (centroid - Eigen::Vector2d::Constant(1.0 / 3.0)).lpNorm<Eigen::Infinity>();
  return {p_value > 0.001 && offset <= 0.005,
          fmt("chi2 %.2f, p %.3f; centroid offset %.4f", chi2, p_value, offset)};
}

Outcome audience_protocol() {
  BenchConfig cfg;
  cfg.scenario = Scenario::audience;
  cfg.methods = {Method::centroid, Method::integral};
  cfg.repeats = 50;
  cfg.seed = 1;
  const BenchReport report = run_bench(cfg);
  double centroid = 0.0;
  double integral = 0.0;
  int used = 0;
  for (const auto& row : report.repeats) {
    if (row[0].failed || row[1].failed) continue;
    centroid += row[0].mae;
    integral += row[1].mae;
    ++used;
  }
  centroid /= used;
  integral /= used;
  return {used == 50 && integral < centroid,
          fmt("MAE integral %.1f vs centroid %.1f over %d survey sets", integral, centroid, used)};
}

}  // namespace
}  // namespace bgp

int main() {
  using namespace bgp;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"kernel exactness", kernel_exactness},
      {"gradient suite", gradient_suite},
      {"robot reproduction", robot_reproduction},
      {"gram positive semidefinite", psd_property},
      {"4-d sphere covariance", sphere_covariance},
      {"polygon gram convergence", polygon_gram_convergence},
      {"privacy ordering", dp_ordering},
      {"ep non-negativity", ep_nonnegativity},
      {"simplex sampling uniformity", simplex_uniformity},
      {"audience protocol", audience_protocol},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
