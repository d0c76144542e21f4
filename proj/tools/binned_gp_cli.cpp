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

// binned-gp: fit, predict, synth and bench verbs over the binned_gp library.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "binned_gp/bench.hpp"
#include "binned_gp/gp_regression.hpp"
#include "binned_gp/io.hpp"
#include "binned_gp/kernel_core.hpp"
#include "binned_gp/nonneg_ep.hpp"
#include "binned_gp/polytope.hpp"
#include "binned_gp/privacy.hpp"
#include "binned_gp/scenarios.hpp"

namespace {

using namespace bgp;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  if (text.str().find_first_not_of(" \t\r\n") == std::string::npos) {
    throw UsageError("'" + path + "' is empty");
  }
  return text.str();
}

// Writes to `path`, or stdout when empty.
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  write(out);
}

struct Options {
  std::string input;
  std::string queries;
  std::string output;
  std::uint64_t seed = 0;
  std::optional<double> epsilon;
  std::string mode = "latent";
  std::vector<int> virtual_grid;
  double nu = 1e-2;
  std::optional<double> density;
  std::optional<int> rects;
  std::optional<int> resolution;
  int repeats = 10;
  int max_iters = 1000;
  bool with_noise = false;
  std::string scenario;
  std::vector<std::string> methods;
  std::vector<double> grid_search;
  int bootstrap = 10000;
};

// Starting point for region approximations: l = range / 4 of the bounding
// boxes, alpha = var(y / volume), noise = alpha / 10.
Hyperparameters approximation_init(const PolytopeFile& file) {
  BinnedDataset boxes;
  for (const auto& p : file.regions) {
    boxes.regions.emplace_back(p.lower_bound(), p.upper_bound());
  }
  boxes.y = file.y;
  for (std::size_t i = 0; i < file.regions.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    boxes.y(idx) *= boxes.regions[i].volume() / file.regions[i].volume();
  }
  return default_init(boxes);
}

std::vector<RegionApproximation> approximate_all(const std::vector<Polytope>& regions,
                                                 const ApproximationSettings& s, Rng& rng) {
  std::vector<RegionApproximation> out;
  for (const auto& p : regions) {
    if (s.kind == ApproximationKind::points) {
      out.push_back(fill_points(p, s.density, rng));
    } else {
      RectangleFill fill;
      fill.max_rectangles = s.rectangles;
      fill.resolution = s.resolution;
      out.push_back(fill_rectangles(p, fill));
    }
  }
  return out;
}

Hyperrectangle bounding_box(const std::vector<Hyperrectangle>& regions) {
  Eigen::VectorXd lo = regions.front().lower;
  Eigen::VectorXd hi = regions.front().upper;
  for (const auto& r : regions) {
    lo = lo.cwiseMin(r.lower);
    hi = hi.cwiseMax(r.upper);
  }
  return Hyperrectangle(lo, hi);
}

std::vector<int> default_grid(Eigen::Index dims) {
  // About 10^4 points at most in total.
  const int per_axis = std::max(2, std::min(53, static_cast<int>(std::floor(std::pow(1e4, 1.0 / dims)))));
  return std::vector<int>(static_cast<std::size_t>(dims), per_axis);
}

int cmd_fit(const Options& o) {
  const std::string text = slurp(o.input);
  std::istringstream in(text);
  const std::string format = peek_format(in);
  FitConfig cfg;
  cfg.max_iters = o.max_iters;

  ModelFile model;
  model.seed = o.seed;
  FitResult result;
  if (format == "bins") {
    const BinFile file = read_bins(in);
    const BinnedDataset data = file.dataset();
    Hyperparameters init = default_init(data);
    if (file.noise_variance) {
      init.noise_variance = *file.noise_variance;
      cfg.optimize_noise = false;
      model.noise_fixed = true;
    }
    result = fit(data, init, cfg);
    model.bins = file;
    if (!o.virtual_grid.empty()) {
      const VirtualPoints vp =
          place_virtual_grid(bounding_box(data.regions), o.virtual_grid, o.nu);
      const EPResult ep = ep_fit(data, result.hyperparameters, vp);
      model.nonneg = NonnegSettings{o.virtual_grid, o.nu, ep.state};
      std::cerr << "nonneg: " << ep.state.sweeps << " sweeps, converged=" << ep.state.converged
                << ", skipped=" << ep.state.skipped_updates << '\n';
    }
  } else if (format == "polytopes") {
    const PolytopeFile file = read_polytopes(in);
    ApproximationSettings settings;
    if (o.density && o.rects) throw UsageError("--density and --rects are exclusive");
    if (o.density) {
      settings.kind = ApproximationKind::points;
      settings.density = *o.density;
    } else {
      settings.kind = ApproximationKind::rectangles;
      settings.rectangles = o.rects.value_or(10);
      settings.resolution = o.resolution.value_or(64);
    }
    Rng rng = make_stream(o.seed, 0);
    const ApproximationCovariance source(approximate_all(file.regions, settings, rng));
    result = fit(source, file.y, Eigen::VectorXd::Ones(file.y.size()), approximation_init(file), cfg);
    model.polytopes = file;
    model.approximation = settings;
  } else {
    throw DataError("fit: unsupported input format '" + format + "'");
  }
  model.hyperparameters = result.hyperparameters;
  model.log_marginal_likelihood = result.log_marginal_likelihood;
  model.iterations = result.iterations;
  model.converged = result.converged;
  emit(o.output, [&](std::ostream& out) { write_model(out, model); });
  std::cerr << describe(result.hyperparameters) << "\nlog marginal likelihood " << result.log_marginal_likelihood
            << " after " << result.iterations << " iterations"
            << (result.converged ? " (converged)" : " (not converged)") << '\n';
  return kOk;
}

Eigen::MatrixXd point_rows(const std::vector<LatentPoint>& points) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(points.size()), points.empty() ? 0 : points.front().size());
  for (std::size_t i = 0; i < points.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  return rows;
}

std::vector<std::string> numbered(const std::string& stem, Eigen::Index d) {
  std::vector<std::string> out;
  for (Eigen::Index k = 1; k <= d; ++k) out.push_back(stem + std::to_string(k));
  return out;
}

int cmd_predict(const Options& o) {
  const std::string model_text = slurp(o.input);
  std::istringstream model_in(model_text);
  const ModelFile model = read_model(model_in);
  const Hyperparameters& hp = model.hyperparameters;
  const std::string query_text = slurp(o.queries);
  std::istringstream qin(query_text);
  const std::string format = peek_format(qin);

  PredictionTable table;
  if (o.mode == "latent" || o.mode == "nonneg") {
    if (!model.bins) throw UsageError("--mode " + o.mode + " needs a model fitted on bins");
    if (format != "points") throw DataError("--mode " + o.mode + " needs a points query file");
    const PointFile q = read_points(qin);
    if (q.dims != hp.dims()) throw DataError("query dimension does not match the model");
    const BinnedDataset data = model.bins->dataset();
    table.query_columns = numbered("x", q.dims);
    table.queries = point_rows(q.points);
    if (o.mode == "latent") {
      table.posterior = predict_latent(data, hp, q.points);
    } else {
      std::vector<int> grid = o.virtual_grid;
      double nu = o.nu;
      std::optional<EPState> state;
      if (model.nonneg && (grid.empty() || grid == model.nonneg->grid)) {
        grid = model.nonneg->grid;
        nu = model.nonneg->nu;
        state = model.nonneg->state;
      }
      if (grid.empty()) grid = default_grid(hp.dims());
      const VirtualPoints vp = place_virtual_grid(bounding_box(data.regions), grid, nu);
      if (!state) state = ep_fit(data, hp, vp).state;
      const ConstrainedPosterior post = predict_constrained(*state, data, hp, vp, q.points);
      table.posterior = {post.latent_mean, post.latent_variance};
      table.link_mean = post.link_mean;
    }
  } else if (o.mode == "integral") {
    if (model.bins) {
      if (format != "bins") throw DataError("--mode integral needs a bins query file");
      const BinFile q = read_bins(qin);
      if (q.dims != hp.dims()) throw DataError("query dimension does not match the model");
      table.posterior = predict_integral(model.bins->dataset(), hp, q.regions);
      for (Eigen::Index k = 1; k <= q.dims; ++k) {
        table.query_columns.push_back("s" + std::to_string(k));
        table.query_columns.push_back("t" + std::to_string(k));
      }
      table.queries.resize(static_cast<Eigen::Index>(q.regions.size()), 2 * q.dims);
      for (std::size_t i = 0; i < q.regions.size(); ++i) {
        for (Eigen::Index k = 0; k < q.dims; ++k) {
          table.queries(static_cast<Eigen::Index>(i), 2 * k) = q.regions[i].lower(k);
          table.queries(static_cast<Eigen::Index>(i), 2 * k + 1) = q.regions[i].upper(k);
        }
      }
    } else {
      if (format != "polytopes") throw DataError("--mode integral needs a polytopes query file");
      const PolytopeFile q = read_polytopes(qin);
      if (q.dims != hp.dims()) throw DataError("query dimension does not match the model");
      Rng rng = make_stream(model.seed, 0);
      const auto train = approximate_all(model.polytopes->regions, *model.approximation, rng);
      const auto queries = approximate_all(q.regions, *model.approximation, rng);
      table.posterior = predict_approx(train, model.polytopes->y, Eigen::VectorXd::Ones(model.polytopes->y.size()),
                                       hp, queries);
      table.query_columns = {"region"};
      table.queries.resize(static_cast<Eigen::Index>(q.regions.size()), 1);
      for (Eigen::Index i = 0; i < table.queries.rows(); ++i) table.queries(i, 0) = static_cast<double>(i);
    }
  } else {
    throw UsageError("unknown --mode '" + o.mode + "' (latent, integral or nonneg)");
  }
  if (o.with_noise) table.posterior.variance.array() += hp.noise_variance;
  emit(o.output, [&](std::ostream& out) { write_predictions(out, table); });
  return kOk;
}

// Returns the variance of the added noise, which fitting then holds fixed.
std::optional<double> privatize_in_place(Eigen::VectorXd& y, std::optional<double> epsilon, Rng& rng) {
  if (!epsilon) return std::nullopt;
  DPConfig cfg;
  cfg.epsilon = *epsilon;
  y = privatize(y, cfg, rng);
  return dp_noise_variance(cfg);
}

std::optional<double> privacy_noise(std::optional<double> epsilon) {
  if (!epsilon) return std::nullopt;
  DPConfig cfg;
  cfg.epsilon = *epsilon;
  return dp_noise_variance(cfg);
}

int cmd_synth(const Options& o) {
  const auto scenario = parse_scenario(o.scenario);
  if (!scenario || *scenario == Scenario::prior) {
    throw UsageError("unknown scenario '" + o.scenario + "' (robot, histogram, audience or polygons)");
  }
  Rng rng = make_stream(o.seed, 0);
  const std::string& prefix = o.output;
  auto path = [&](const std::string& suffix) { return prefix.empty() ? std::string() : prefix + suffix; };

  switch (*scenario) {
    case Scenario::robot: {
      RobotScenario s = synth_robot(rng);
      if (o.epsilon) s.bins.noise_variance = privatize_in_place(s.bins.y, o.epsilon, rng);
      emit(path(".bins.csv"), [&](std::ostream& out) { write_bins(out, s.bins); });
      break;
    }
    case Scenario::histogram: {
      HistogramScenario s = synth_histogram(rng, o.epsilon);
      s.bins.noise_variance = privacy_noise(o.epsilon);
      emit(path(".bins.csv"), [&](std::ostream& out) { write_bins(out, s.bins); });
      if (!prefix.empty()) {
        BinFile truth;
        truth.dims = 1;
        truth.regions = single_years();
        truth.y = s.per_year;
        emit(path(".truth.csv"), [&](std::ostream& out) { write_bins(out, truth); });
      }
      break;
    }
    case Scenario::audience: {
      const AudiencePopulation population = synth_audience_population(rng);
      SurveySet s = synth_survey_set(population, rng);
      s.train.noise_variance = privatize_in_place(s.train.y, o.epsilon, rng);
      emit(path(".bins.csv"), [&](std::ostream& out) { write_bins(out, s.train); });
      if (!prefix.empty()) {
        BinFile test;
        test.dims = 3;
        test.regions = {s.test};
        test.y = Eigen::VectorXd::Constant(1, s.test_count);
        emit(path(".test.csv"), [&](std::ostream& out) { write_bins(out, test); });
      }
      break;
    }
    case Scenario::polygons: {
      const PolygonScenario s = synth_polygons(rng);
      PolytopeFile groups = s.group_file();
      privatize_in_place(groups.y, o.epsilon, rng);
      emit(path(".polytopes.csv"), [&](std::ostream& out) { write_polytopes(out, groups); });
      if (!prefix.empty()) {
        PolytopeFile areas;
        areas.dims = 2;
        areas.regions = s.areas;
        areas.y.resize(static_cast<Eigen::Index>(s.areas.size()));
        for (std::size_t i = 0; i < s.areas.size(); ++i) {
          areas.y(static_cast<Eigen::Index>(i)) = s.area_density(static_cast<Eigen::Index>(i)) * s.areas[i].volume();
        }
        emit(path(".areas.csv"), [&](std::ostream& out) { write_polytopes(out, areas); });
      }
      break;
    }
    case Scenario::prior:
      break;
  }
  return kOk;
}

int cmd_bench(const Options& o) {
  const auto scenario = parse_scenario(o.scenario);
  if (!scenario) throw UsageError("unknown scenario '" + o.scenario + "'");
  BenchConfig cfg;
  cfg.scenario = *scenario;
  cfg.repeats = o.repeats;
  cfg.seed = o.seed;
  cfg.epsilon = o.epsilon;
  cfg.bootstrap_resamples = o.bootstrap;
  cfg.options.max_iters = o.max_iters;
  cfg.options.virtual_grid = o.virtual_grid;
  cfg.options.nu = o.nu;
  cfg.options.density = o.density;
  if (o.rects) cfg.options.features = *o.rects;
  cfg.options.resolution = o.resolution.value_or(128);
  cfg.options.grid_search = o.grid_search;
  if (o.methods.empty()) {
    cfg.methods = supported_methods(*scenario);
  } else {
    for (const auto& name : o.methods) {
      const auto m = parse_method(name);
      if (!m) throw UsageError("unknown method '" + name + "'");
      cfg.methods.push_back(*m);
    }
  }
  const BenchReport report = run_bench(cfg);
  emit(o.output, [&](std::ostream& out) { write_bench(out, report); });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian process regression from binned and aggregated observations"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Master random seed"); };
  auto add_iters = [&](CLI::App* c) {
    c->add_option("--max-iters", o.max_iters, "Optimizer iteration limit")->check(CLI::NonNegativeNumber);
  };
  auto add_grid = [&](CLI::App* c) {
    c->add_option("--virtual-grid", o.virtual_grid, "Virtual points per dimension for non-negativity")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    c->add_option("--nu", o.nu, "Probit steepness in units of the prior standard deviation")
        ->check(CLI::PositiveNumber);
  };
  auto add_approx = [&](CLI::App* c) {
    c->add_option("--density", o.density, "Points per unit volume for polytope regions")->check(CLI::PositiveNumber);
    c->add_option("--rects", o.rects, "Rectangles per polytope region")->check(CLI::PositiveNumber);
    c->add_option("--resolution", o.resolution, "Grid cells per axis for rectangle filling")
        ->check(CLI::PositiveNumber);
  };

  auto* fit_cmd = app.add_subcommand("fit", "Fit hyperparameters to a bins or polytopes file");
  fit_cmd->add_option("input", o.input, "Data file")->required();
  fit_cmd->add_option("-o,--output", o.output, "Model file (default stdout)");
  add_seed(fit_cmd);
  add_iters(fit_cmd);
  add_grid(fit_cmd);
  add_approx(fit_cmd);

  auto* predict_cmd = app.add_subcommand("predict", "Predict from a fitted model");
  predict_cmd->add_option("model", o.input, "Model file")->required();
  predict_cmd->add_option("queries", o.queries, "Query file")->required();
  predict_cmd->add_option("--mode", o.mode, "latent, integral or nonneg");
  predict_cmd->add_flag("--with-noise", o.with_noise, "Include observation noise in the variance");
  predict_cmd->add_option("-o,--output", o.output, "Prediction table (default stdout)");
  add_grid(predict_cmd);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("scenario", o.scenario, "robot, histogram, audience or polygons")->required();
  synth_cmd->add_option("-o,--output", o.output, "Output file prefix (default: main file to stdout)");
  synth_cmd->add_option("--epsilon", o.epsilon, "Laplace-mechanism privacy budget")->check(CLI::PositiveNumber);
  add_seed(synth_cmd);

  auto* bench_cmd = app.add_subcommand("bench", "Compare methods over repeated synthetic datasets");
  bench_cmd->add_option("scenario", o.scenario, "robot, histogram, audience, polygons or prior")->required();
  bench_cmd->add_option("--methods", o.methods, "simple, centroid, integral, nonneg, points, rectangles")
      ->delimiter(',');
  bench_cmd->add_option("--repeats", o.repeats, "Number of datasets")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--epsilon", o.epsilon, "Laplace-mechanism privacy budget")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--grid-search", o.grid_search, "Candidate lengthscales")->delimiter(',');
  bench_cmd->add_option("--bootstrap", o.bootstrap, "Bootstrap resamples")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("-o,--output", o.output, "Metrics table (default stdout)");
  add_seed(bench_cmd);
  add_iters(bench_cmd);
  add_grid(bench_cmd);
  add_approx(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(o);
    if (*predict_cmd) return cmd_predict(o);
    if (*synth_cmd) return cmd_synth(o);
    if (*bench_cmd) return cmd_bench(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what()
              << "\nhint: allow observation noise, remove duplicated bins or rescale the inputs\n";
    return kNumerical;
  }
  return kUsage;
}
