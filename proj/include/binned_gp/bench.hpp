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

// Repeated method comparisons on synthetic scenarios.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "binned_gp/scenarios.hpp"

namespace bgp {

enum class Method { simple, centroid, integral, nonneg, points, rectangles };

std::optional<Method> parse_method(const std::string& name);
std::string method_name(Method m);

struct MethodOptions {
  int max_iters = 1000;
  /// Virtual points per dimension for `nonneg`; empty picks a default.
  std::vector<int> virtual_grid;
  double nu = 1e-2;
  /// Points per unit volume for `points`; unset uses `features` per region.
  std::optional<double> density;
  /// Points or rectangles per region.
  int features = 4;
  int resolution = 128;
  /// Candidate lengthscales tried before gradient fitting.
  std::vector<double> grid_search;
};

struct Metrics {
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  /// Fraction of truths inside the central 95% interval; NaN without one.
  double coverage = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
};

/// Methods each scenario supports.
std::vector<Method> supported_methods(Scenario s);

/// One fresh dataset from `data_rng`, every method evaluated on it.
/// Stochastic approximations draw from a copy of `method_rng`.
std::vector<Metrics> evaluate_repeat(Scenario scenario, const std::vector<Method>& methods,
                                     std::optional<double> epsilon, const MethodOptions& options,
                                     Rng& data_rng, const Rng& method_rng);

struct BenchConfig {
  Scenario scenario = Scenario::histogram;
  std::vector<Method> methods;
  int repeats = 10;
  std::uint64_t seed = 0;
  std::optional<double> epsilon;
  MethodOptions options;
  int bootstrap_resamples = 10000;
};

struct BootstrapSummary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

/// Mean with a percentile bootstrap 95% interval; NaN entries are ignored.
BootstrapSummary bootstrap_mean(const std::vector<double>& values, int resamples, Rng& rng);

struct BenchReport {
  BenchConfig config;
  /// repeats[r][m] for method config.methods[m].
  std::vector<std::vector<Metrics>> repeats;
};

BenchReport run_bench(const BenchConfig& config);
void write_bench(std::ostream& out, const BenchReport& report);

/// Worker threads allowed: BINNED_GP_THREADS when set to a positive integer,
/// otherwise the hardware concurrency.
int thread_budget();

/// Runs body(0..count-1) on up to thread_budget() threads; rethrows the first
/// exception after all workers stop.
void parallel_for(int count, const std::function<void(int)>& body);

}  // namespace bgp
