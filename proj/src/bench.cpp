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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "binned_gp/gp_regression.hpp"
#include "binned_gp/nonneg_ep.hpp"
#include "binned_gp/polytope.hpp"

namespace bgp {

namespace {

constexpr Method kAllMethods[] = {Method::simple, Method::centroid, Method::integral,
                                  Method::nonneg, Method::points, Method::rectangles};

}  // namespace

std::optional<Method> parse_method(const std::string& name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::simple: return "simple";
    case Method::centroid: return "centroid";
    case Method::integral: return "integral";
    case Method::nonneg: return "nonneg";
    case Method::points: return "points";
    case Method::rectangles: return "rectangles";
  }
  return "unknown";
}

std::vector<Method> supported_methods(Scenario s) {
  switch (s) {
    case Scenario::robot:
    case Scenario::histogram:
    case Scenario::prior:
      return {Method::simple, Method::centroid, Method::integral, Method::nonneg};
    case Scenario::audience:
      return {Method::simple, Method::centroid, Method::integral};
    case Scenario::polygons:
      return {Method::points, Method::rectangles};
  }
  return {};
}

namespace {

// Predictions for a list of targets together with the truth.
struct Outcome {
  Eigen::VectorXd truth;
  Posterior posterior;
  bool has_interval = true;
};

Metrics score(const Outcome& o) {
  Metrics m;
  const Eigen::VectorXd err = o.posterior.mean - o.truth;
  m.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
  m.mae = err.cwiseAbs().mean();
  if (o.has_interval) {
    const Eigen::VectorXd half = o.posterior.half_width(0.95);
    m.coverage = (err.cwiseAbs().array() <= half.array()).cast<double>().mean();
  }
  return m;
}

Hyperparameters fit_integral(const BinnedDataset& data, const MethodOptions& options) {
  Hyperparameters init = default_init(data);
  if (!options.grid_search.empty()) init = grid_search_lengthscale(data, init, options.grid_search);
  FitConfig cfg;
  cfg.max_iters = options.max_iters;
  return fit(data, init, cfg).hyperparameters;
}

struct CentroidModel {
  std::vector<LatentPoint> points;
  Eigen::VectorXd density;
  Eigen::VectorXd noise_scale;
  Hyperparameters hp;
};

CentroidModel fit_centroid(const BinnedDataset& data, const MethodOptions& options) {
  CentroidModel model;
  model.density.resize(data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    model.points.push_back(data.regions[i].centroid());
    model.density(i) = data.y(i) / data.regions[i].volume();
  }
  model.noise_scale = Eigen::VectorXd::Ones(data.size());
  Hyperparameters init = default_init(data);
  const PointCovariance source(model.points);
  FitConfig cfg;
  cfg.max_iters = options.max_iters;
  model.hp = fit(source, model.density, model.noise_scale, init, cfg).hyperparameters;
  return model;
}

Posterior predict_centroid(const CentroidModel& model, const std::vector<LatentPoint>& queries) {
  return predict_points(model.points, model.density, model.noise_scale, model.hp, queries);
}

// Average density of the narrowest bin containing each point, else of all bins.
Eigen::VectorXd simple_readoff(const BinnedDataset& data, const std::vector<LatentPoint>& queries) {
  double total = 0.0;
  double volume = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    total += data.y(i);
    volume += data.regions[i].volume();
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(queries.size()));
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double best_volume = std::numeric_limits<double>::infinity();
    double value = total / volume;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const auto& r = data.regions[i];
      const bool inside = (queries[q].array() >= r.lower.array()).all() &&
                          (queries[q].array() <= r.upper.array()).all();
      if (inside && r.volume() > 0.0 && r.volume() < best_volume) {
        best_volume = r.volume();
        value = data.y(i) / r.volume();
      }
    }
    out(static_cast<Eigen::Index>(q)) = value;
  }
  return out;
}

Hyperrectangle bounding_box(const BinnedDataset& data) {
  Eigen::VectorXd lo = data.regions.front().lower;
  Eigen::VectorXd hi = data.regions.front().upper;
  for (const auto& r : data.regions) {
    lo = lo.cwiseMin(r.lower);
    hi = hi.cwiseMax(r.upper);
  }
  return Hyperrectangle(lo, hi);
}

Posterior predict_nonneg(const BinnedDataset& data, const MethodOptions& options,
                         const std::vector<LatentPoint>& queries, int default_grid) {
  const Hyperparameters hp = fit_integral(data, options);
  const Hyperrectangle domain = bounding_box(data);
  std::vector<int> grid = options.virtual_grid;
  if (grid.empty()) grid.assign(static_cast<std::size_t>(data.dims()), default_grid);
  const VirtualPoints vp = place_virtual_grid(domain, grid, options.nu);
  const EPResult ep = ep_fit(data, hp, vp);
  const ConstrainedPosterior post = predict_constrained(ep.state, data, hp, vp, queries);
  return {post.latent_mean, post.latent_variance};
}

// Latent-value scenarios: robot, histogram (via single years) and prior.
Metrics run_latent_method(Method method, const BinnedDataset& data, const std::vector<LatentPoint>& queries,
                          const std::vector<Hyperrectangle>* unit_regions, const Eigen::VectorXd& truth,
                          const MethodOptions& options) {
  Outcome o;
  o.truth = truth;
  switch (method) {
    case Method::simple:
      o.posterior.mean = simple_readoff(data, queries);
      o.posterior.variance = Eigen::VectorXd::Zero(o.posterior.mean.size());
      o.has_interval = false;
      break;
    case Method::centroid:
      o.posterior = predict_centroid(fit_centroid(data, options), queries);
      break;
    case Method::integral: {
      const Hyperparameters hp = fit_integral(data, options);
      o.posterior = unit_regions ? predict_integral(data, hp, *unit_regions) : predict_latent(data, hp, queries);
      break;
    }
    case Method::nonneg:
      o.posterior = predict_nonneg(data, options, queries, 51);
      break;
    default:
      throw ContractViolation("method " + method_name(method) + " does not apply here");
  }
  return score(o);
}

Metrics run_audience_method(Method method, const SurveySet& set, const MethodOptions& options) {
  const BinnedDataset data = set.train.dataset();
  Outcome o;
  o.truth = Eigen::VectorXd::Constant(1, set.test_count);
  const double volume = set.test.volume();
  switch (method) {
    case Method::simple: {
      double total = 0.0;
      double vol = 0.0;
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        total += data.y(i);
        vol += data.regions[i].volume();
      }
      o.posterior.mean = Eigen::VectorXd::Constant(1, total / vol * volume);
      o.posterior.variance = Eigen::VectorXd::Zero(1);
      o.has_interval = false;
      break;
    }
    case Method::centroid: {
      const Posterior p = predict_centroid(fit_centroid(data, options), {set.test.centroid()});
      o.posterior.mean = p.mean * volume;
      o.posterior.variance = p.variance * volume * volume;
      break;
    }
    case Method::integral:
      o.posterior = predict_integral(data, fit_integral(data, options), {set.test});
      break;
    default:
      throw ContractViolation("method " + method_name(method) + " does not apply here");
  }
  return score(o);
}

RegionApproximation approximate(const Polytope& p, Method method, const MethodOptions& options, Rng& rng) {
  if (method == Method::points) {
    return options.density ? fill_points(p, *options.density, rng)
                           : fill_points_count(p, options.features, rng);
  }
  RectangleFill fill;
  fill.max_rectangles = options.features;
  fill.resolution = options.resolution;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  fill.shift.resize(p.dims());
  for (Eigen::Index k = 0; k < p.dims(); ++k) fill.shift(k) = unit(rng);
  return fill_rectangles(p, fill);
}

Metrics run_polygon_method(Method method, const PolygonScenario& s, const MethodOptions& options, Rng& rng) {
  if (method != Method::points && method != Method::rectangles) {
    throw ContractViolation("method " + method_name(method) + " does not apply here");
  }
  std::vector<RegionApproximation> train;
  for (const auto& g : s.groups) train.push_back(approximate(g, method, options, rng));
  std::vector<RegionApproximation> queries;
  for (const auto& a : s.areas) queries.push_back(approximate(a, method, options, rng));
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s.group_totals.size());
  const Posterior integrals = predict_approx(train, s.group_totals, ones, s.hyperparameters, queries);
  Outcome o;
  o.truth = s.area_density;
  o.posterior.mean.resize(s.area_density.size());
  o.posterior.variance.resize(s.area_density.size());
  for (std::size_t i = 0; i < s.areas.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const double v = s.areas[i].volume();
    o.posterior.mean(idx) = integrals.mean(idx) / v;
    o.posterior.variance(idx) = integrals.variance(idx) / (v * v);
  }
  return score(o);
}

std::vector<LatentPoint> year_midpoints() {
  std::vector<LatentPoint> out;
  for (int a = 0; a < 100; ++a) out.push_back(Eigen::VectorXd::Constant(1, a + 0.5));
  return out;
}

}  // namespace

std::vector<Metrics> evaluate_repeat(Scenario scenario, const std::vector<Method>& methods,
                                     std::optional<double> epsilon, const MethodOptions& options,
                                     Rng& data_rng, const Rng& method_rng) {
  const auto supported = supported_methods(scenario);
  for (Method m : methods) {
    if (std::find(supported.begin(), supported.end(), m) == supported.end()) {
      throw ContractViolation("method '" + method_name(m) + "' is not available for scenario '" +
                              scenario_name(scenario) + "'");
    }
  }

  std::function<Metrics(Method)> run;
  // Scenario data lives here so the closures can refer to it.
  std::optional<HistogramScenario> histogram;
  std::optional<RobotScenario> robot;
  std::optional<PriorScenario> prior;
  std::optional<SurveySet> survey;
  std::optional<PolygonScenario> polygons;
  std::vector<LatentPoint> queries;
  std::vector<Hyperrectangle> years;
  Eigen::VectorXd truth;
  BinnedDataset data;

  switch (scenario) {
    case Scenario::histogram: {
      histogram = synth_histogram(data_rng, epsilon);
      data = histogram->bins.dataset();
      queries = year_midpoints();
      years = single_years();
      truth = histogram->per_year;
      run = [&](Method m) { return run_latent_method(m, data, queries, &years, truth, options); };
      break;
    }
    case Scenario::robot: {
      robot = synth_robot(data_rng);
      data = robot->bins.dataset();
      truth.resize(17);
      for (int i = 0; i <= 16; ++i) {
        queries.push_back(Eigen::VectorXd::Constant(1, 0.5 * i));
        truth(i) = robot->speed(0.5 * i);
      }
      run = [&](Method m) { return run_latent_method(m, data, queries, nullptr, truth, options); };
      break;
    }
    case Scenario::prior: {
      prior = synth_prior(data_rng);
      data = prior->bins.dataset();
      queries = prior->queries;
      truth = prior->truth;
      run = [&](Method m) { return run_latent_method(m, data, queries, nullptr, truth, options); };
      break;
    }
    case Scenario::audience: {
      const AudiencePopulation population = synth_audience_population(data_rng);
      survey = synth_survey_set(population, data_rng);
      run = [&](Method m) { return run_audience_method(m, *survey, options); };
      break;
    }
    case Scenario::polygons: {
      polygons = synth_polygons(data_rng);
      run = [&](Method m) {
        Rng rng = method_rng;
        return run_polygon_method(m, *polygons, options, rng);
      };
      break;
    }
  }

  std::vector<Metrics> out;
  for (Method m : methods) {
    try {
      out.push_back(run(m));
    } catch (const NumericalError&) {
      Metrics failed;
      failed.failed = true;
      out.push_back(failed);
    }
  }
  return out;
}

BootstrapSummary bootstrap_mean(const std::vector<double>& values, int resamples, Rng& rng) {
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  BootstrapSummary out;
  out.count = static_cast<int>(finite.size());
  if (finite.empty()) return out;
  double sum = 0.0;
  for (double v : finite) sum += v;
  out.mean = sum / static_cast<double>(finite.size());
  if (resamples <= 0) {
    out.lower = out.upper = out.mean;
    return out;
  }
  std::uniform_int_distribution<std::size_t> pick(0, finite.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < finite.size(); ++i) s += finite[pick(rng)];
    m = s / static_cast<double>(finite.size());
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  out.lower = quantile(0.025);
  out.upper = quantile(0.975);
  return out;
}

int thread_budget() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BINNED_GP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return static_cast<int>(hw);
}

void parallel_for(int count, const std::function<void(int)>& body) {
  const int workers = std::min(thread_budget(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

BenchReport run_bench(const BenchConfig& config) {
  detail::require(config.repeats >= 1, "bench: repeats must be at least 1");
  detail::require(!config.methods.empty(), "bench: no methods");
  BenchReport report;
  report.config = config;
  report.repeats.resize(static_cast<std::size_t>(config.repeats));
  parallel_for(config.repeats, [&](int r) {
    Rng data_rng = make_stream(config.seed, 2 * static_cast<std::uint64_t>(r));
    const Rng method_rng = make_stream(config.seed, 2 * static_cast<std::uint64_t>(r) + 1);
    report.repeats[static_cast<std::size_t>(r)] =
        evaluate_repeat(config.scenario, config.methods, config.epsilon, config.options, data_rng, method_rng);
  });
  return report;
}

void write_bench(std::ostream& out, const BenchReport& report) {
  const auto& cfg = report.config;
  nlohmann::json header = {{"format", "bench"},
                           {"scenario", scenario_name(cfg.scenario)},
                           {"repeats", cfg.repeats},
                           {"seed", cfg.seed},
                           {"bootstrap_resamples", cfg.bootstrap_resamples},
                           {"columns", {"method", "metric", "mean", "lower", "upper", "n", "failures"}}};
  if (cfg.epsilon) header["epsilon"] = *cfg.epsilon;
  out << "# " << header.dump() << '\n';
  Rng rng = make_stream(cfg.seed, ~std::uint64_t{0});
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    int failures = 0;
    std::vector<double> rmse, mae, coverage;
    for (const auto& rep : report.repeats) {
      failures += rep[m].failed ? 1 : 0;
      rmse.push_back(rep[m].rmse);
      mae.push_back(rep[m].mae);
      coverage.push_back(rep[m].coverage);
    }
    const std::pair<const char*, const std::vector<double>*> metrics[] = {
        {"rmse", &rmse}, {"mae", &mae}, {"coverage", &coverage}};
    for (const auto& [name, values] : metrics) {
      const BootstrapSummary s = bootstrap_mean(*values, cfg.bootstrap_resamples, rng);
      out << method_name(cfg.methods[m]) << ',' << name << ',' << s.mean << ',' << s.lower << ','
          << s.upper << ',' << s.count << ',' << failures << '\n';
    }
  }
}

}  // namespace bgp
