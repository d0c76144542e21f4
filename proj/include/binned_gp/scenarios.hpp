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

// Synthetic data generators for the command-line `synth` and `bench` verbs.
// Every generator is a pure function of the RNG it is handed.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "binned_gp/io.hpp"
#include "binned_gp/polytope.hpp"
#include "binned_gp/types.hpp"

namespace bgp {

using Rng = std::mt19937_64;

/// Independent stream `stream` of the master seed.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

enum class Scenario { robot, histogram, audience, polygons, prior };

std::optional<Scenario> parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);

// Robot: distances travelled over four time intervals by a robot whose speed
// grows at about 1 m/s^2.

/// The four reference robot observations (intervals in s, distances in m).
BinFile robot_reference_data();

/// Eight sums over [0, 52] with steep flanks and no observations between 21
/// and 31, where an unconstrained fit swings below zero.
BinFile dip_reference_data();
Hyperrectangle dip_domain();

struct RobotScenario {
  BinFile bins;
  double initial_speed = 0.0;
  double acceleration = 1.0;

  double speed(double t) const { return initial_speed + acceleration * t; }
};

RobotScenario synth_robot(Rng& rng);

// Histogram: ages of a population summarised as 10-year bin counts.

struct HistogramScenario {
  BinFile bins;
  Eigen::VectorXd true_counts;
  /// Number of people of each single year of age 0..99.
  Eigen::VectorXd per_year;
  std::optional<double> epsilon;
};

/// Ages drawn with weight exp(-((a - 35) / 12)^2) over 0..99; bins of ten
/// years. With epsilon the bin counts go through the Laplace mechanism.
HistogramScenario synth_histogram(Rng& rng, std::optional<double> epsilon, int population = 1000,
                                  bool clamp_negative = false);

std::vector<Hyperrectangle> single_years();

// Audience: survey respondents by (join date, age, income).

struct AudiencePopulation {
  /// 3 x N: join date in years, age in years, income in k$.
  Eigen::MatrixXd people;
  Hyperrectangle domain;

  double count_in(const Hyperrectangle& region) const;
};

AudiencePopulation synth_audience_population(Rng& rng, int count = 5802);

struct SurveySet {
  BinFile train;
  Hyperrectangle test;
  double test_count = 0.0;
};

/// 6 to 19 past surveys plus the next survey as the test region. A survey
/// run at date T reaches everyone who joined before T within its age and
/// income bands.
SurveySet synth_survey_set(const AudiencePopulation& population, Rng& rng);

// Polygons: a jittered grid of quadrilateral areas over [0, 4]^2 randomly
// grouped into sets whose totals are observed.

struct DensityField {
  double base = 1.0;
  std::vector<Eigen::Vector2d> centers;
  std::vector<double> weights;
  std::vector<double> widths;

  double operator()(const Eigen::Vector2d& x) const;
  /// Accurate integral over a triangle by recursive subdivision.
  double integrate(const Simplex& triangle, int levels = 4) const;
  double integrate(const Polytope& polytope) const;
};

struct PolygonScenario {
  DensityField field;
  std::vector<Polytope> areas;
  Eigen::VectorXd area_density;
  std::vector<std::vector<int>> membership;
  std::vector<Polytope> groups;
  Eigen::VectorXd group_totals;
  /// Fixed hyperparameters used when benchmarking approximations.
  Hyperparameters hyperparameters;

  PolytopeFile group_file() const;
};

PolygonScenario synth_polygons(Rng& rng, int grid = 10, int group_count = 40);

/// Three L-shaped polygons (three unit squares each, as six triangles) at
/// different positions and rotations.
std::vector<Polytope> l_shaped_sets();

/// Two 4-D balls of radius 1 and 2 whose centres are 3 apart.
std::pair<Ball, Ball> touching_balls();

// Prior: bins of a function drawn from the model's own prior.

struct PriorScenario {
  BinFile bins;
  std::vector<LatentPoint> queries;
  Eigen::VectorXd truth;
  Hyperparameters hyperparameters;
};

/// Joint draw of bin integrals and latent values on [0, 20] with alpha = 1,
/// l = 2 and noise variance 0.05.
PriorScenario synth_prior(Rng& rng, int bins = 20, int queries = 41);

}  // namespace bgp
