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


#include "binned_gp/bench.hpp"

#include "binned_gp/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace bgp {
namespace {

// Sets BINNED_GP_THREADS for one scope and restores the previous value.
class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("BINNED_GP_THREADS")) saved_ = old;
    if (value) {
      setenv("BINNED_GP_THREADS", value, 1);
    } else {
      unsetenv("BINNED_GP_THREADS");
    }
  }
  ~ThreadsEnv() {
    if (saved_.empty()) {
      unsetenv("BINNED_GP_THREADS");
    } else {
      setenv("BINNED_GP_THREADS", saved_.c_str(), 1);
    }
  }

 private:
  std::string saved_;
};

std::vector<double> column(const BenchReport& report, std::size_t method, double Metrics::*field) {
  std::vector<double> out;
  for (const auto& row : report.repeats) out.push_back(row[method].*field);
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::simple, Method::centroid, Method::integral, Method::nonneg, Method::points,
                   Method::rectangles}) {
    const auto parsed = parse_method(method_name(m));
    ASSERT_TRUE(parsed.has_value());
    EXPECT_EQ(*parsed, m);
  }
  EXPECT_FALSE(parse_method("kriging").has_value());
}

TEST(Methods, ScenarioSupport) {
  const auto hist = supported_methods(Scenario::histogram);
  EXPECT_NE(std::find(hist.begin(), hist.end(), Method::integral), hist.end());
  EXPECT_EQ(std::find(hist.begin(), hist.end(), Method::rectangles), hist.end());
  const auto poly = supported_methods(Scenario::polygons);
  EXPECT_NE(std::find(poly.begin(), poly.end(), Method::rectangles), poly.end());
  EXPECT_EQ(std::find(poly.begin(), poly.end(), Method::centroid), poly.end());
}

TEST(Methods, UnsupportedMethodIsAContractViolation) {
  Rng data = make_stream(1, 0);
  const Rng method = make_stream(1, 1);
  EXPECT_THROW(evaluate_repeat(Scenario::polygons, {Method::centroid}, std::nullopt, {}, data, method),
               ContractViolation);
}

TEST(Bootstrap, ConstantDataHasZeroWidth) {
  Rng rng = make_stream(3, 0);
  const auto s = bootstrap_mean(std::vector<double>(12, 2.5), 500, rng);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.lower, 2.5);
  EXPECT_DOUBLE_EQ(s.upper, 2.5);
  EXPECT_EQ(s.count, 12);
}

TEST(Bootstrap, IgnoresNaN) {
  Rng rng = make_stream(3, 0);
  const auto s = bootstrap_mean({1.0, std::nan(""), 3.0}, 200, rng);
  EXPECT_EQ(s.count, 2);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_GE(s.lower, 1.0);
  EXPECT_LE(s.upper, 3.0);
}

TEST(Bootstrap, EmptyInputIsNaN) {
  Rng rng = make_stream(3, 0);
  const auto s = bootstrap_mean({}, 100, rng);
  EXPECT_EQ(s.count, 0);
  EXPECT_TRUE(std::isnan(s.mean));
}

TEST(Bootstrap, IntervalBracketsMean) {
  Rng gen = make_stream(5, 0);
  std::normal_distribution<double> normal(10.0, 2.0);
  std::vector<double> v(200);
  for (auto& x : v) x = normal(gen);
  Rng rng = make_stream(5, 1);
  const auto s = bootstrap_mean(v, 2000, rng);
  EXPECT_LT(s.lower, s.mean);
  EXPECT_GT(s.upper, s.mean);
  // Standard error of the mean is about 2 / sqrt(200) = 0.14.
  EXPECT_NEAR(s.upper - s.lower, 2 * 1.96 * 2.0 / std::sqrt(200.0), 0.15);
}

TEST(Threads, BudgetReadsEnvironment) {
  {
    ThreadsEnv env("3");
    EXPECT_EQ(thread_budget(), 3);
  }
  {
    ThreadsEnv env("zero");
    EXPECT_GE(thread_budget(), 1);
  }
  {
    ThreadsEnv env("-2");
    EXPECT_GE(thread_budget(), 1);
  }
}

TEST(Threads, ParallelForVisitsEveryIndexOnce) {
  ThreadsEnv env("4");
  std::vector<std::atomic<int>> hits(97);
  parallel_for(97, [&](int i) { hits[static_cast<std::size_t>(i)]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(Threads, ParallelForRethrows) {
  for (const char* n : {"1", "4"}) {
    ThreadsEnv env(n);
    EXPECT_THROW(parallel_for(20,
                              [](int i) {
                                if (i == 7) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
  }
}

TEST(Bench, DeterministicAcrossThreadCounts) {
  BenchConfig cfg;
  cfg.scenario = Scenario::histogram;
  cfg.methods = {Method::simple, Method::centroid, Method::integral};
  cfg.repeats = 4;
  cfg.seed = 11;
  cfg.epsilon = 1.0;
  cfg.bootstrap_resamples = 50;
  std::string serial;
  std::string threaded;
  {
    ThreadsEnv env("1");
    std::ostringstream out;
    write_bench(out, run_bench(cfg));
    serial = out.str();
  }
  {
    ThreadsEnv env("3");
    std::ostringstream out;
    write_bench(out, run_bench(cfg));
    threaded = out.str();
  }
  EXPECT_EQ(serial, threaded);
}

TEST(Bench, SingleRepeatIsReproducible) {
  BenchConfig cfg;
  cfg.scenario = Scenario::robot;
  cfg.methods = {Method::integral};
  cfg.repeats = 1;
  cfg.seed = 4;
  cfg.bootstrap_resamples = 10;
  std::ostringstream a;
  std::ostringstream b;
  write_bench(a, run_bench(cfg));
  write_bench(b, run_bench(cfg));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Bench, RejectsEmptyConfiguration) {
  BenchConfig cfg;
  cfg.methods = {};
  EXPECT_THROW(run_bench(cfg), ContractViolation);
  cfg.methods = {Method::integral};
  cfg.repeats = 0;
  EXPECT_THROW(run_bench(cfg), ContractViolation);
}

TEST(Bench, HistogramUnderPrivacyOrdersMethods) {
  BenchConfig cfg;
  cfg.scenario = Scenario::histogram;
  cfg.methods = {Method::simple, Method::centroid, Method::integral};
  cfg.repeats = 10;
  cfg.seed = 21;
  cfg.epsilon = 1.0;
  const BenchReport report = run_bench(cfg);
  const double simple = mean_of(column(report, 0, &Metrics::rmse));
  const double centroid = mean_of(column(report, 1, &Metrics::rmse));
  const double integral = mean_of(column(report, 2, &Metrics::rmse));
  EXPECT_LT(integral, centroid);
  EXPECT_LT(centroid, simple);
}

TEST(Bench, WellSpecifiedCoverageIsCalibrated) {
  BenchConfig cfg;
  cfg.scenario = Scenario::prior;
  cfg.methods = {Method::integral};
  cfg.repeats = 20;
  cfg.seed = 1;
  const BenchReport report = run_bench(cfg);
  for (const auto& row : report.repeats) EXPECT_FALSE(row[0].failed);
  const double coverage = mean_of(column(report, 0, &Metrics::coverage));
  EXPECT_GE(coverage, 0.85);
  EXPECT_LE(coverage, 0.99);
}

class PolygonFeatures : public ::testing::TestWithParam<int> {};

TEST_P(PolygonFeatures, RectanglesBeatPoints) {
  BenchConfig cfg;
  cfg.scenario = Scenario::polygons;
  cfg.methods = {Method::points, Method::rectangles};
  cfg.repeats = 4;
  cfg.seed = 8;
  cfg.options.features = GetParam();
  const BenchReport report = run_bench(cfg);
  const double points = mean_of(column(report, 0, &Metrics::mae));
  const double rects = mean_of(column(report, 1, &Metrics::mae));
  EXPECT_LE(rects, points);
}

INSTANTIATE_TEST_SUITE_P(TwoToEight, PolygonFeatures, ::testing::Values(2, 4, 8));

TEST(Bench, WriterEmitsHeaderAndRows) {
  BenchConfig cfg;
  cfg.scenario = Scenario::robot;
  cfg.methods = {Method::simple, Method::integral};
  cfg.repeats = 2;
  cfg.seed = 2;
  cfg.bootstrap_resamples = 20;
  std::ostringstream out;
  write_bench(out, run_bench(cfg));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# {", 0), 0u);
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 2 * 3);
}

}  // namespace
}  // namespace bgp
