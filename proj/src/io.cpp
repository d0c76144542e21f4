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

#include "binned_gp/io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace bgp {

using nlohmann::json;

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buffer[32];
  const auto res = std::to_chars(buffer, buffer + sizeof(buffer), v);
  return std::string(buffer, res.ptr);
}

double parse_double(std::string_view field, int line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw DataError("line " + std::to_string(line) + ": cannot parse number '" +
                    std::string(field) + "'");
  }
  if (!std::isfinite(v)) {
    throw DataError("line " + std::to_string(line) + ": non-finite value");
  }
  return v;
}

std::vector<double> split_numbers(const std::string& text, int line) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    out.push_back(parse_double(std::string_view(text).substr(start, comma - start), line));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Reader {
  std::istream& in;
  json header;
  int line = 0;

  explicit Reader(std::istream& stream, const std::string& expected) : in(stream) {
    std::string text;
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      break;
    }
    if (line == 0 || text.find_first_not_of(" \t\r") == std::string::npos) {
      throw DataError("empty input");
    }
    if (text.rfind("#", 0) != 0) {
      throw DataError("line " + std::to_string(line) + ": expected a '# {...}' metadata line");
    }
    try {
      header = json::parse(text.substr(1));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line) + ": bad metadata: " + e.what());
    }
    if (!header.is_object() || !header.contains("format")) {
      throw DataError("line " + std::to_string(line) + ": metadata has no \"format\"");
    }
    const auto format = header["format"].get<std::string>();
    if (!expected.empty() && format != expected) {
      throw DataError("expected a '" + expected + "' file, found '" + format + "'");
    }
  }

  Eigen::Index dims() const {
    if (!header.contains("dims") || !header["dims"].is_number_integer() || header["dims"].get<int>() < 1) {
      throw DataError("metadata: \"dims\" must be a positive integer");
    }
    return header["dims"].get<int>();
  }

  // Next data row, skipping blanks and comments; false at end of input.
  bool next(std::vector<double>& row) {
    std::string text;
    while (std::getline(in, text)) {
      ++line;
      const auto first = text.find_first_not_of(" \t\r");
      if (first == std::string::npos || text[first] == '#') continue;
      row = split_numbers(text, line);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("line " + std::to_string(line) + ": " + what);
  }
};

void write_row(std::ostream& out, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << format_double(values[i]);
  }
  out << '\n';
}

std::string kind_name(ObservationKind k) { return k == ObservationKind::sum ? "sum" : "mean"; }

ObservationKind parse_kind(const std::string& s) {
  if (s == "sum") return ObservationKind::sum;
  if (s == "mean") return ObservationKind::mean;
  throw DataError("metadata: unknown kind '" + s + "'");
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

BinnedDataset BinFile::dataset() const {
  BinnedDataset data;
  data.regions = regions;
  data.y = y;
  if (noise == NoiseModel::heteroscedastic) {
    if (counts.size() != y.size()) {
      throw DataError("heteroscedastic noise needs a count column");
    }
    data = heteroscedastic_noise(std::move(data), counts, kind);
  }
  return data;
}

std::string peek_format(std::istream& in) {
  const auto start = in.tellg();
  Reader reader(in, "");
  const auto format = reader.header["format"].get<std::string>();
  in.clear();
  in.seekg(start);
  return format;
}

BinFile read_bins(std::istream& in) {
  Reader reader(in, "bins");
  BinFile file;
  file.dims = reader.dims();
  file.kind = parse_kind(reader.header.value("kind", std::string("sum")));
  const auto noise = reader.header.value("noise", std::string("homoscedastic"));
  if (noise == "heteroscedastic") {
    file.noise = NoiseModel::heteroscedastic;
  } else if (noise != "homoscedastic") {
    throw DataError("metadata: unknown noise model '" + noise + "'");
  }
  if (reader.header.contains("noise_variance") && !reader.header["noise_variance"].is_null()) {
    file.noise_variance = reader.header["noise_variance"].get<double>();
    if (!(*file.noise_variance >= 0.0)) throw DataError("metadata: noise_variance must be >= 0");
  }
  const bool has_counts = reader.header.value("has_counts", false);
  const auto d = file.dims;
  const std::size_t width = static_cast<std::size_t>(2 * d + 1 + (has_counts ? 1 : 0));

  std::vector<double> ys;
  std::vector<double> counts;
  std::vector<double> row;
  while (reader.next(row)) {
    if (row.size() != width) {
      reader.fail("expected " + std::to_string(width) + " columns, found " + std::to_string(row.size()));
    }
    Eigen::VectorXd lo(d);
    Eigen::VectorXd hi(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      lo(k) = row[static_cast<std::size_t>(2 * k)];
      hi(k) = row[static_cast<std::size_t>(2 * k + 1)];
      if (hi(k) < lo(k)) reader.fail("upper bound below lower bound");
    }
    file.regions.emplace_back(std::move(lo), std::move(hi));
    ys.push_back(row[static_cast<std::size_t>(2 * d)]);
    if (has_counts) {
      const double n = row.back();
      if (n < 0.0) reader.fail("negative count");
      counts.push_back(n);
    }
  }
  if (file.regions.empty()) throw DataError("no data rows");
  file.y = from_vector(ys);
  if (has_counts) file.counts = from_vector(counts);
  if (file.noise == NoiseModel::heteroscedastic && !has_counts) {
    throw DataError("metadata: heteroscedastic noise requires has_counts");
  }
  return file;
}

void write_bins(std::ostream& out, const BinFile& file) {
  json header = {{"format", "bins"},
                 {"dims", file.dims},
                 {"kind", kind_name(file.kind)},
                 {"noise", file.noise == NoiseModel::heteroscedastic ? "heteroscedastic" : "homoscedastic"},
                 {"has_counts", file.counts.size() > 0}};
  if (file.noise_variance) header["noise_variance"] = *file.noise_variance;
  out << "# " << header.dump() << '\n';
  for (std::size_t i = 0; i < file.regions.size(); ++i) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < file.dims; ++k) {
      row.push_back(file.regions[i].lower(k));
      row.push_back(file.regions[i].upper(k));
    }
    row.push_back(file.y(static_cast<Eigen::Index>(i)));
    if (file.counts.size() > 0) row.push_back(file.counts(static_cast<Eigen::Index>(i)));
    write_row(out, row);
  }
}

PointFile read_points(std::istream& in) {
  Reader reader(in, "points");
  PointFile file;
  file.dims = reader.dims();
  std::vector<double> row;
  while (reader.next(row)) {
    if (static_cast<Eigen::Index>(row.size()) != file.dims) {
      reader.fail("expected " + std::to_string(file.dims) + " columns, found " + std::to_string(row.size()));
    }
    file.points.push_back(from_vector(row));
  }
  if (file.points.empty()) throw DataError("no data rows");
  return file;
}

void write_points(std::ostream& out, const PointFile& file) {
  out << "# " << json{{"format", "points"}, {"dims", file.dims}}.dump() << '\n';
  for (const auto& p : file.points) write_row(out, to_vector(p));
}

PolytopeFile read_polytopes(std::istream& in) {
  Reader reader(in, "polytopes");
  PolytopeFile file;
  file.dims = reader.dims();
  const auto d = file.dims;
  const std::size_t width = static_cast<std::size_t>(2 + (d + 1) * d);
  std::map<long long, std::pair<double, std::vector<Simplex>>> grouped;
  std::vector<long long> order;
  std::vector<double> row;
  while (reader.next(row)) {
    if (row.size() != width) {
      reader.fail("expected " + std::to_string(width) + " columns, found " + std::to_string(row.size()));
    }
    if (row[0] != std::floor(row[0])) reader.fail("region_id must be an integer");
    const auto id = static_cast<long long>(row[0]);
    Eigen::MatrixXd vertices(d, d + 1);
    for (Eigen::Index v = 0; v <= d; ++v) {
      for (Eigen::Index k = 0; k < d; ++k) vertices(k, v) = row[static_cast<std::size_t>(2 + v * d + k)];
    }
    auto [it, inserted] = grouped.try_emplace(id, row[1], std::vector<Simplex>{});
    if (inserted) {
      order.push_back(id);
    } else if (it->second.first != row[1]) {
      reader.fail("region " + std::to_string(id) + " has conflicting y values");
    }
    it->second.second.emplace_back(std::move(vertices));
  }
  if (order.empty()) throw DataError("no data rows");
  std::vector<double> ys;
  for (long long id : order) {
    ys.push_back(grouped[id].first);
    file.regions.emplace_back(std::move(grouped[id].second));
  }
  file.y = from_vector(ys);
  return file;
}

void write_polytopes(std::ostream& out, const PolytopeFile& file) {
  out << "# " << json{{"format", "polytopes"}, {"dims", file.dims}}.dump() << '\n';
  for (std::size_t r = 0; r < file.regions.size(); ++r) {
    for (const auto& s : file.regions[r].simplexes()) {
      std::vector<double> row{static_cast<double>(r), file.y(static_cast<Eigen::Index>(r))};
      for (Eigen::Index v = 0; v < s.vertices.cols(); ++v) {
        for (Eigen::Index k = 0; k < s.vertices.rows(); ++k) row.push_back(s.vertices(k, v));
      }
      write_row(out, row);
    }
  }
}

namespace {

json bins_to_json(const BinFile& file) {
  std::ostringstream text;
  write_bins(text, file);
  return text.str();
}

json polytopes_to_json(const PolytopeFile& file) {
  std::ostringstream text;
  write_polytopes(text, file);
  return text.str();
}

// Infinity is not representable in JSON; unset sites are stored as null.
json finite_or_null(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) {
      out.push_back(v(i));
    } else {
      out.push_back(nullptr);
    }
  }
  return out;
}

Eigen::VectorXd null_as_infinity(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) =
        j[i].is_null() ? std::numeric_limits<double>::infinity() : j[i].get<double>();
  }
  return v;
}

}  // namespace

void write_model(std::ostream& out, const ModelFile& model) {
  const auto& hp = model.hyperparameters;
  json j;
  j["format"] = "binned-gp-model";
  j["version"] = 1;
  j["hyperparameters"] = {{"alpha", hp.alpha},
                          {"lengthscales", to_vector(hp.lengthscales)},
                          {"noise_variance", hp.noise_variance}};
  j["log_marginal_likelihood"] = model.log_marginal_likelihood;
  j["iterations"] = model.iterations;
  j["converged"] = model.converged;
  j["seed"] = model.seed;
  j["noise_fixed"] = model.noise_fixed;
  if (model.bins) j["bins"] = bins_to_json(*model.bins);
  if (model.polytopes) j["polytopes"] = polytopes_to_json(*model.polytopes);
  if (model.approximation) {
    const auto& a = *model.approximation;
    j["approximation"] = {{"kind", a.kind == ApproximationKind::points ? "points" : "rectangles"},
                          {"density", a.density},
                          {"rectangles", a.rectangles},
                          {"resolution", a.resolution}};
  }
  if (model.nonneg) {
    const auto& n = *model.nonneg;
    j["nonneg"] = {{"grid", n.grid},
                   {"nu", n.nu},
                   {"sweeps", n.state.sweeps},
                   {"converged", n.state.converged},
                   {"skipped_updates", n.state.skipped_updates},
                   {"log_evidence_history", n.state.log_evidence_history},
                   {"site_log_Z", to_vector(n.state.site_log_Z)},
                   {"site_mu", to_vector(n.state.site_mu)},
                   {"site_sigma2", finite_or_null(n.state.site_sigma2)}};
  }
  out << j.dump(2) << '\n';
}

ModelFile read_model(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  try {
    if (j.value("format", std::string()) != "binned-gp-model") {
      throw DataError("model file: not a binned-gp model");
    }
    ModelFile model;
    const auto& h = j.at("hyperparameters");
    model.hyperparameters.alpha = h.at("alpha").get<double>();
    model.hyperparameters.lengthscales = from_vector(h.at("lengthscales").get<std::vector<double>>());
    model.hyperparameters.noise_variance = h.at("noise_variance").get<double>();
    model.hyperparameters.validate();
    model.log_marginal_likelihood = j.value("log_marginal_likelihood", 0.0);
    model.iterations = j.value("iterations", 0);
    model.converged = j.value("converged", false);
    model.seed = j.value("seed", std::uint64_t{0});
    model.noise_fixed = j.value("noise_fixed", false);
    if (j.contains("bins")) {
      std::istringstream text(j["bins"].get<std::string>());
      model.bins = read_bins(text);
    }
    if (j.contains("polytopes")) {
      std::istringstream text(j["polytopes"].get<std::string>());
      model.polytopes = read_polytopes(text);
    }
    if (model.bins.has_value() == model.polytopes.has_value()) {
      throw DataError("model file: needs exactly one of \"bins\" or \"polytopes\"");
    }
    if (j.contains("approximation")) {
      const auto& a = j["approximation"];
      ApproximationSettings s;
      s.kind = a.at("kind").get<std::string>() == "rectangles" ? ApproximationKind::rectangles
                                                               : ApproximationKind::points;
      s.density = a.value("density", 0.0);
      s.rectangles = a.value("rectangles", 0);
      s.resolution = a.value("resolution", 64);
      model.approximation = s;
    }
    if (j.contains("nonneg")) {
      const auto& n = j["nonneg"];
      NonnegSettings s;
      s.grid = n.at("grid").get<std::vector<int>>();
      s.nu = n.at("nu").get<double>();
      s.state.sweeps = n.value("sweeps", 0);
      s.state.converged = n.value("converged", false);
      s.state.skipped_updates = n.value("skipped_updates", 0);
      s.state.log_evidence_history = n.value("log_evidence_history", std::vector<double>{});
      s.state.site_log_Z = from_vector(n.at("site_log_Z").get<std::vector<double>>());
      s.state.site_mu = from_vector(n.at("site_mu").get<std::vector<double>>());
      s.state.site_sigma2 = null_as_infinity(n.at("site_sigma2"));
      model.nonneg = std::move(s);
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  } catch (const ContractViolation& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

void write_predictions(std::ostream& out, const PredictionTable& table) {
  std::vector<std::string> columns = table.query_columns;
  for (const char* c : {"mean", "variance", "lower", "upper"}) columns.emplace_back(c);
  if (table.link_mean) columns.emplace_back("link_mean");
  out << "# " << json{{"format", "predictions"}, {"level", table.level}, {"columns", columns}}.dump()
      << '\n';
  const Eigen::VectorXd half = table.posterior.half_width(table.level);
  for (Eigen::Index i = 0; i < table.posterior.mean.size(); ++i) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < table.queries.cols(); ++k) row.push_back(table.queries(i, k));
    const double m = table.posterior.mean(i);
    row.insert(row.end(), {m, table.posterior.variance(i), m - half(i), m + half(i)});
    if (table.link_mean) row.push_back((*table.link_mean)(i));
    write_row(out, row);
  }
}

}  // namespace bgp
