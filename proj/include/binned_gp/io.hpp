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

// Delimited-text data files with a single "# {json}" metadata line, and the
// JSON model file written by `binned-gp fit`.
//
//   bins       s_1,t_1,...,s_d,t_d,y[,n]
//   points     x_1,...,x_d
//   polytopes  region_id,y,v0_1..v0_d,...,vd_1..vd_d   (one simplex per row)

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "binned_gp/gp_regression.hpp"
#include "binned_gp/nonneg_ep.hpp"
#include "binned_gp/polytope.hpp"
#include "binned_gp/types.hpp"

namespace bgp {

enum class NoiseModel { homoscedastic, heteroscedastic };

struct BinFile {
  Eigen::Index dims = 0;
  ObservationKind kind = ObservationKind::sum;
  NoiseModel noise = NoiseModel::homoscedastic;
  /// Known noise variance (e.g. from a privacy mechanism); when set, fitting
  /// keeps sigma^2 fixed at this value.
  std::optional<double> noise_variance;
  std::vector<Hyperrectangle> regions;
  Eigen::VectorXd y;
  /// Per-bin sample counts; empty when the file has none.
  Eigen::VectorXd counts;

  /// Regions and y with noise_scale derived from the noise model.
  BinnedDataset dataset() const;
};

struct PointFile {
  Eigen::Index dims = 0;
  std::vector<LatentPoint> points;
};

struct PolytopeFile {
  Eigen::Index dims = 0;
  std::vector<Polytope> regions;
  Eigen::VectorXd y;
};

/// Format name from the metadata line ("bins", "points", "polytopes").
std::string peek_format(std::istream& in);

BinFile read_bins(std::istream& in);
void write_bins(std::ostream& out, const BinFile& file);

PointFile read_points(std::istream& in);
void write_points(std::ostream& out, const PointFile& file);

PolytopeFile read_polytopes(std::istream& in);
void write_polytopes(std::ostream& out, const PolytopeFile& file);

struct ApproximationSettings {
  ApproximationKind kind = ApproximationKind::points;
  /// Points per unit volume (points) or rectangles per region (rectangles).
  double density = 0.0;
  int rectangles = 0;
  int resolution = 64;
};

struct NonnegSettings {
  std::vector<int> grid;
  double nu = 1e-2;
  EPState state;
};

struct ModelFile {
  Hyperparameters hyperparameters;
  double log_marginal_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  bool noise_fixed = false;
  /// Exactly one of bins / polytopes is populated.
  std::optional<BinFile> bins;
  std::optional<PolytopeFile> polytopes;
  std::optional<ApproximationSettings> approximation;
  std::optional<NonnegSettings> nonneg;
};

void write_model(std::ostream& out, const ModelFile& model);
ModelFile read_model(std::istream& in);

struct PredictionTable {
  std::vector<std::string> query_columns;
  Eigen::MatrixXd queries;  // one row per query
  Posterior posterior;
  std::optional<Eigen::VectorXd> link_mean;
  double level = 0.95;
};

void write_predictions(std::ostream& out, const PredictionTable& table);

}  // namespace bgp
