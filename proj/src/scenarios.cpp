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

#include "binned_gp/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "binned_gp/kernel_core.hpp"
#include "binned_gp/privacy.hpp"

namespace bgp {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::optional<Scenario> parse_scenario(const std::string& name) {
  for (Scenario s : {Scenario::robot, Scenario::histogram, Scenario::audience, Scenario::polygons,
                     Scenario::prior}) {
    if (scenario_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::robot: return "robot";
    case Scenario::histogram: return "histogram";
    case Scenario::audience: return "audience";
    case Scenario::polygons: return "polygons";
    case Scenario::prior: return "prior";
  }
  return "unknown";
}

namespace {

Hyperrectangle interval_box(double s, double t) {
  return Hyperrectangle(Eigen::VectorXd::Constant(1, s), Eigen::VectorXd::Constant(1, t));
}

BinFile one_dimensional(const std::vector<std::pair<double, double>>& intervals, const Eigen::VectorXd& y) {
  BinFile file;
  file.dims = 1;
  file.kind = ObservationKind::sum;
  for (const auto& [s, t] : intervals) file.regions.push_back(interval_box(s, t));
  file.y = y;
  return file;
}

const std::vector<std::pair<double, double>> kRobotIntervals = {{0, 8}, {2.5, 3.5}, {4, 6}, {7, 8}};

}  // namespace

BinFile robot_reference_data() {
  Eigen::VectorXd y(4);
  y << 33.47, 3.49, 9.56, 8.27;
  return one_dimensional(kRobotIntervals, y);
}

BinFile dip_reference_data() {
  const std::vector<std::pair<double, double>> intervals = {{0, 6},   {6, 12},  {12, 18}, {18, 21},
                                                            {31, 34}, {34, 40}, {40, 46}, {46, 52}};
  Eigen::VectorXd y(8);
  y << 60.0, 50.0, 20.0, 0.5, 0.5, 20.0, 50.0, 60.0;
  return one_dimensional(intervals, y);
}

Hyperrectangle dip_domain() { return interval_box(0.0, 52.0); }

RobotScenario synth_robot(Rng& rng) {
  RobotScenario out;
  std::uniform_real_distribution<double> start(0.0, 0.5);
  std::normal_distribution<double> noise(0.0, std::sqrt(0.6));
  out.initial_speed = start(rng);
  Eigen::VectorXd y(static_cast<Eigen::Index>(kRobotIntervals.size()));
  for (std::size_t i = 0; i < kRobotIntervals.size(); ++i) {
    const auto [s, t] = kRobotIntervals[i];
    const double distance = out.initial_speed * (t - s) + 0.5 * out.acceleration * (t * t - s * s);
    y(static_cast<Eigen::Index>(i)) = distance + noise(rng);
  }
  out.bins = one_dimensional(kRobotIntervals, y);
  return out;
}

std::vector<Hyperrectangle> single_years() {
  std::vector<Hyperrectangle> years;
  for (int a = 0; a < 100; ++a) years.push_back(interval_box(a, a + 1));
  return years;
}

HistogramScenario synth_histogram(Rng& rng, std::optional<double> epsilon, int population,
                                  bool clamp_negative) {
  detail::require(population >= 1, "synth_histogram: population must be positive");
  std::vector<double> weights(100);
  for (int a = 0; a < 100; ++a) weights[static_cast<std::size_t>(a)] = std::exp(-std::pow((a - 35.0) / 12.0, 2));
  std::discrete_distribution<int> age(weights.begin(), weights.end());

  HistogramScenario out;
  out.per_year = Eigen::VectorXd::Zero(100);
  for (int i = 0; i < population; ++i) out.per_year(age(rng)) += 1.0;
  out.true_counts.resize(10);
  std::vector<std::pair<double, double>> bins;
  for (int b = 0; b < 10; ++b) {
    out.true_counts(b) = out.per_year.segment(10 * b, 10).sum();
    bins.emplace_back(10.0 * b, 10.0 * (b + 1));
  }
  Eigen::VectorXd y = out.true_counts;
  if (epsilon) {
    DPConfig cfg;
    cfg.epsilon = *epsilon;
    cfg.clamp_negative = clamp_negative;
    y = privatize(out.true_counts, cfg, rng);
  }
  out.bins = one_dimensional(bins, y);
  out.epsilon = epsilon;
  return out;
}

double AudiencePopulation::count_in(const Hyperrectangle& region) const {
  double n = 0.0;
  for (Eigen::Index i = 0; i < people.cols(); ++i) {
    if ((people.col(i).array() >= region.lower.array()).all() &&
        (people.col(i).array() <= region.upper.array()).all()) {
      n += 1.0;
    }
  }
  return n;
}

namespace {

constexpr double kYears = 4.0;
constexpr double kMinAge = 18.0;
constexpr double kMaxAge = 90.0;
constexpr double kMaxIncome = 250.0;

}  // namespace

AudiencePopulation synth_audience_population(Rng& rng, int count) {
  detail::require(count >= 1, "synth_audience_population: count must be positive");
  AudiencePopulation out;
  out.domain = Hyperrectangle(Eigen::Vector3d(0.0, kMinAge, 0.0), Eigen::Vector3d(kYears, kMaxAge, kMaxIncome));
  out.people.resize(3, count);
  std::gamma_distribution<double> age_excess(2.0, 12.0);
  std::lognormal_distribution<double> income(std::log(60.0), 0.6);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    double age;
    do {
      age = kMinAge + age_excess(rng);
    } while (age > kMaxAge);
    double pay;
    do {
      pay = income(rng);
    } while (pay > kMaxIncome);
    // Younger people tend to have joined more recently. Exponents stay in
    // [0.5, 1] so the join-date density is bounded.
    const double exponent = 0.5 + 0.5 * std::min(1.0, (age - kMinAge) / 40.0);
    const double joined = kYears * std::pow(uniform(rng), exponent);
    out.people.col(i) << joined, age, pay;
  }
  return out;
}

SurveySet synth_survey_set(const AudiencePopulation& population, Rng& rng) {
  std::uniform_int_distribution<int> how_many(6, 19);
  std::uniform_real_distribution<double> date(0.3, kYears);
  std::uniform_real_distribution<double> age_lo(kMinAge, 70.0);
  std::uniform_real_distribution<double> age_width(8.0, 35.0);
  std::uniform_real_distribution<double> income_lo(0.0, 150.0);
  std::uniform_real_distribution<double> income_width(20.0, 120.0);

  const int surveys = how_many(rng) + 1;
  std::vector<Hyperrectangle> regions;
  for (int i = 0; i < surveys; ++i) {
    const double t = date(rng);
    const double a0 = age_lo(rng);
    const double a1 = std::min(kMaxAge, a0 + age_width(rng));
    const double i0 = income_lo(rng);
    const double i1 = std::min(kMaxIncome, i0 + income_width(rng));
    regions.emplace_back(Eigen::Vector3d(0.0, a0, i0), Eigen::Vector3d(t, a1, i1));
  }
  std::sort(regions.begin(), regions.end(),
            [](const Hyperrectangle& a, const Hyperrectangle& b) { return a.upper(0) < b.upper(0); });

  SurveySet out;
  out.test = regions.back();
  out.test_count = population.count_in(out.test);
  regions.pop_back();
  out.train.dims = 3;
  out.train.kind = ObservationKind::sum;
  out.train.y.resize(static_cast<Eigen::Index>(regions.size()));
  for (std::size_t i = 0; i < regions.size(); ++i) {
    out.train.y(static_cast<Eigen::Index>(i)) = population.count_in(regions[i]);
  }
  out.train.regions = std::move(regions);
  return out;
}

double DensityField::operator()(const Eigen::Vector2d& x) const {
  double v = base;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    v += weights[k] * std::exp(-(x - centers[k]).squaredNorm() / (widths[k] * widths[k]));
  }
  return v;
}

double DensityField::integrate(const Simplex& triangle, int levels) const {
  detail::require(triangle.dims() == 2, "DensityField: triangles only");
  const Eigen::Vector2d a = triangle.vertices.col(0);
  const Eigen::Vector2d b = triangle.vertices.col(1);
  const Eigen::Vector2d c = triangle.vertices.col(2);
  if (levels == 0) {
    // Edge-midpoint rule, exact for quadratics.
    const double area = 0.5 * std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
    return area / 3.0 * ((*this)(0.5 * (a + b)) + (*this)(0.5 * (b + c)) + (*this)(0.5 * (a + c)));
  }
  const Eigen::Vector2d ab = 0.5 * (a + b);
  const Eigen::Vector2d bc = 0.5 * (b + c);
  const Eigen::Vector2d ca = 0.5 * (c + a);
  auto tri = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
    Eigen::Matrix<double, 2, 3> m;
    m << p, q, r;
    return Simplex(m);
  };
  return integrate(tri(a, ab, ca), levels - 1) + integrate(tri(ab, b, bc), levels - 1) +
         integrate(tri(ca, bc, c), levels - 1) + integrate(tri(ab, bc, ca), levels - 1);
}

double DensityField::integrate(const Polytope& polytope) const {
  double total = 0.0;
  for (const auto& s : polytope.simplexes()) total += integrate(s);
  return total;
}

PolytopeFile PolygonScenario::group_file() const {
  PolytopeFile file;
  file.dims = 2;
  file.regions = groups;
  file.y = group_totals;
  return file;
}

namespace {

Simplex triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const Eigen::Vector2d& r) {
  Eigen::MatrixXd m(2, 3);
  m << p, q, r;
  return Simplex(m);
}

}  // namespace

PolygonScenario synth_polygons(Rng& rng, int grid, int group_count) {
  detail::require(grid >= 2, "synth_polygons: grid must be at least 2");
  detail::require(group_count >= 1 && group_count <= grid * grid,
                  "synth_polygons: need between 1 and grid^2 groups");
  constexpr double kSide = 4.0;
  const double cell = kSide / grid;
  std::uniform_real_distribution<double> jitter(-0.25 * cell, 0.25 * cell);
  std::vector<Eigen::Vector2d> nodes;
  for (int j = 0; j <= grid; ++j) {
    for (int i = 0; i <= grid; ++i) {
      Eigen::Vector2d p(i * cell, j * cell);
      if (i > 0 && i < grid) p.x() += jitter(rng);
      if (j > 0 && j < grid) p.y() += jitter(rng);
      nodes.push_back(p);
    }
  }
  auto node = [&](int i, int j) { return nodes[static_cast<std::size_t>(j * (grid + 1) + i)]; };

  PolygonScenario out;
  std::uniform_real_distribution<double> where(0.0, kSide);
  std::uniform_real_distribution<double> weight(2.0, 8.0);
  std::uniform_real_distribution<double> width(0.4, 1.0);
  for (int k = 0; k < 4; ++k) {
    out.field.centers.emplace_back(where(rng), where(rng));
    out.field.weights.push_back(weight(rng));
    out.field.widths.push_back(width(rng));
  }

  std::vector<double> densities;
  for (int j = 0; j < grid; ++j) {
    for (int i = 0; i < grid; ++i) {
      out.areas.emplace_back(std::vector<Simplex>{triangle(node(i, j), node(i + 1, j), node(i + 1, j + 1)),
                                                  triangle(node(i, j), node(i + 1, j + 1), node(i, j + 1))});
      densities.push_back(out.field.integrate(out.areas.back()) / out.areas.back().volume());
    }
  }
  out.area_density = Eigen::Map<Eigen::VectorXd>(densities.data(), static_cast<Eigen::Index>(densities.size()));

  // Every group gets one area, the rest are assigned uniformly.
  std::vector<int> order(out.areas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  out.membership.assign(static_cast<std::size_t>(group_count), {});
  std::uniform_int_distribution<int> pick(0, group_count - 1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int g = i < static_cast<std::size_t>(group_count) ? static_cast<int>(i) : pick(rng);
    out.membership[static_cast<std::size_t>(g)].push_back(order[i]);
  }
  out.group_totals.resize(group_count);
  for (int g = 0; g < group_count; ++g) {
    std::vector<Simplex> simplexes;
    double total = 0.0;
    for (int a : out.membership[static_cast<std::size_t>(g)]) {
      const auto& area = out.areas[static_cast<std::size_t>(a)];
      simplexes.insert(simplexes.end(), area.simplexes().begin(), area.simplexes().end());
      total += out.area_density(a) * area.volume();
    }
    out.groups.emplace_back(std::move(simplexes));
    out.group_totals(g) = total;
  }

  const double mean_total = out.group_totals.mean();
  out.hyperparameters = Hyperparameters::isotropic(out.area_density.squaredNorm() / out.area_density.size(),
                                                   0.6, 2, 1e-3 * mean_total * mean_total);
  return out;
}

std::vector<Polytope> l_shaped_sets() {
  const std::vector<std::pair<Eigen::Vector2d, double>> placements = {
      {{0.0, 0.0}, 0.0}, {{3.0, 0.5}, std::numbers::pi / 6.0}, {{1.0, 3.0}, std::numbers::pi / 3.0}};
  std::vector<Polytope> out;
  for (const auto& [offset, angle] : placements) {
    Eigen::Matrix2d rotation;
    rotation << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    auto at = [&](double x, double y) -> Eigen::Vector2d { return rotation * Eigen::Vector2d(x, y) + offset; };
    std::vector<Simplex> simplexes;
    for (const auto& [x, y] : std::vector<std::pair<double, double>>{{0, 0}, {1, 0}, {0, 1}}) {
      simplexes.push_back(triangle(at(x, y), at(x + 1, y), at(x + 1, y + 1)));
      simplexes.push_back(triangle(at(x, y), at(x + 1, y + 1), at(x, y + 1)));
    }
    out.emplace_back(std::move(simplexes));
  }
  return out;
}

std::pair<Ball, Ball> touching_balls() {
  Ball small{Eigen::VectorXd::Zero(4), 1.0};
  Ball large{Eigen::VectorXd::Zero(4), 2.0};
  large.center(0) = 3.0;
  return {small, large};
}

PriorScenario synth_prior(Rng& rng, int bins, int queries) {
  detail::require(bins >= 1 && queries >= 1, "synth_prior: need bins and queries");
  constexpr double kDomain = 20.0;
  PriorScenario out;
  out.hyperparameters = Hyperparameters::isotropic(1.0, 2.0, 1, 0.05);
  std::uniform_real_distribution<double> start(0.0, kDomain - 2.0);
  std::uniform_real_distribution<double> width(0.5, 4.0);
  std::vector<std::pair<double, double>> intervals;
  for (int i = 0; i < bins; ++i) {
    const double s = start(rng);
    intervals.emplace_back(s, std::min(kDomain, s + width(rng)));
  }
  for (int q = 0; q < queries; ++q) {
    out.queries.push_back(Eigen::VectorXd::Constant(1, kDomain * q / std::max(queries - 1, 1)));
  }

  const auto& hp = out.hyperparameters;
  const Eigen::Index n = bins;
  const Eigen::Index m = queries;
  Eigen::MatrixXd k(n + m, n + m);
  std::vector<Hyperrectangle> regions;
  for (const auto& [s, t] : intervals) regions.push_back(interval_box(s, t));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = integral_cov(regions[i], regions[j], hp);
    for (Eigen::Index j = 0; j < m; ++j) k(i, n + j) = k(n + j, i) = cross_cov(regions[i], out.queries[j], hp);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(n + i, n + j) = k(n + j, n + i) = eq_kernel(out.queries[i], out.queries[j], hp);
    }
  }
  k.diagonal().array() += 1e-9 * hp.alpha;
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw NumericalError("synth_prior: joint prior not positive definite");
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(n + m);
  for (Eigen::Index i = 0; i < n + m; ++i) z(i) = normal(rng);
  const Eigen::VectorXd draw = llt.matrixL() * z;

  Eigen::VectorXd y = draw.head(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) += std::sqrt(hp.noise_variance) * normal(rng);
  out.bins = one_dimensional(intervals, y);
  out.truth = draw.tail(m);
  return out;
}

}  // namespace bgp
