// SPDX-License-Identifier: Apache-2.0
#include "ppou/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ppou {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim surrounding whitespace and carriage returns.
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, long line_no, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw std::runtime_error("CSV parse error at line " + std::to_string(line_no) +
                             ", column '" + column + "': cannot parse '" + cell + "'");
  }
  if (!std::isfinite(value)) {
    throw std::runtime_error("CSV error at line " + std::to_string(line_no) + ", column '" +
                             column + "': non-finite value '" + cell + "'");
  }
  return value;
}

void format_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

Dataset gen_sine_noise(long n, double alpha, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_sine_noise: need n >= 2");
  if (alpha < 0.0) throw std::invalid_argument("gen_sine_noise: alpha must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset d;
  d.x.resize(n, 1);
  d.y.resize(n);
  d.clean.resize(n);
  for (long i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    const double signal = std::sin(2.0 * kPi * x);
    d.x(i, 0) = x;
    d.clean(i) = signal;
    d.y(i) = alpha == 0.0 ? signal : signal + alpha * x * gauss(rng);
  }
  d.provenance = "sine_noise(n=" + std::to_string(n) + ",alpha=" + std::to_string(alpha) +
                 ",seed=" + std::to_string(seed) + ")";
  return d;
}

Dataset gen_trefoil(long n) {
  if (n < 2) throw std::invalid_argument("gen_trefoil: need n >= 2");
  Dataset d;
  d.x.resize(n, 3);
  d.y.resize(n);
  d.params.resize(n, 1);
  for (long i = 0; i < n; ++i) {
    const double t = 1.8 * kPi * static_cast<double>(i) / static_cast<double>(n - 1);
    d.x(i, 0) = std::sin(t) + 2.0 * std::sin(2.0 * t);
    d.x(i, 1) = std::cos(t) - 2.0 * std::cos(2.0 * t);
    d.x(i, 2) = -std::sin(3.0 * t);
    d.y(i) = kPi * t - t * t + (t * t - kPi * t) / (1.0 + std::exp(-100.0 * t));
    d.params(i, 0) = t;
  }
  d.provenance = "trefoil(n=" + std::to_string(n) + ")";
  return d;
}

Dataset gen_swissroll(long n, std::uint64_t seed, const SwissRollOptions& options) {
  if (n < 4) throw std::invalid_argument("gen_swissroll: need n >= 4");
  const long m1 = std::max<long>(2, std::lround(std::sqrt(static_cast<double>(n))));
  const long m2 = std::max<long>(2, (n + m1 - 1) / m1);
  const double step1 = (options.t1_max - options.t1_min) / static_cast<double>(m1 - 1);
  const double step2 = (options.t2_max - options.t2_min) / static_cast<double>(m2 - 1);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset d;
  d.x.resize(n, 3);
  d.y.resize(n);
  d.params.resize(n, 2);
  long row = 0;
  for (long i = 0; i < m1 && row < n; ++i) {
    for (long j = 0; j < m2 && row < n; ++j, ++row) {
      double t1 = options.t1_min + static_cast<double>(i) * step1;
      double t2 = options.t2_min + static_cast<double>(j) * step2;
      if (options.jitter > 0.0) {
        t1 += options.jitter * step1 * (unit(rng) - 0.5);
        t2 += options.jitter * step2 * (unit(rng) - 0.5);
      }
      d.params(row, 0) = t1;
      d.params(row, 1) = t2;
      d.x(row, 0) = t1 * std::cos(t1);
      d.x(row, 1) = t2;
      d.x(row, 2) = t1 * std::sin(t1);
    }
  }

  // Targets use the min-max normalization of the sampled parameters.
  const double lo1 = d.params.col(0).minCoeff(), hi1 = d.params.col(0).maxCoeff();
  const double lo2 = d.params.col(1).minCoeff(), hi2 = d.params.col(1).maxCoeff();
  const double den1 = hi1 > lo1 ? hi1 - lo1 : 1.0;
  const double den2 = hi2 > lo2 ? hi2 - lo2 : 1.0;
  for (long r = 0; r < n; ++r) {
    const double nt1 = (d.params(r, 0) - lo1) / den1;
    const double nt2 = (d.params(r, 1) - lo2) / den2;
    d.y(r) = std::sqrt(nt1) * std::sin(2.0 * kPi * nt2);
  }
  d.provenance = "swissroll(n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")";
  return d;
}

Dataset gen_rings(int dim, int n_rings, long n, std::uint64_t seed, const RingsOptions& options) {
  if (dim < 3) throw std::invalid_argument("gen_rings: need dim >= 3");
  if (n_rings < 1) throw std::invalid_argument("gen_rings: need n_rings >= 1");
  if (n < n_rings || n % n_rings != 0) {
    throw std::invalid_argument("gen_rings: n must be a positive multiple of n_rings");
  }
  const long per_ring = n / n_rings;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset d;
  d.x.resize(n, dim);
  d.y.resize(n);
  d.params.resize(n, 1);
  d.group_id.resize(static_cast<std::size_t>(n));

  long row = 0;
  for (int r = 0; r < n_rings; ++r) {
    // Two orthonormal directions spanning the ring's plane.
    Eigen::VectorXd u(dim), v(dim);
    for (int i = 0; i < dim; ++i) u(i) = gauss(rng);
    u.normalize();
    do {
      for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
      v -= u.dot(v) * u;
    } while (v.norm() < 1e-12);
    v.normalize();

    const double phase = 2.0 * kPi * unit(rng);
    Eigen::VectorXd center = Eigen::VectorXd::Zero(dim);
    center(0) = options.spacing * static_cast<double>(r);

    for (long i = 0; i < per_ring; ++i, ++row) {
      const double t = static_cast<double>(i) / static_cast<double>(per_ring);
      const double a = 2.0 * kPi * t;
      d.x.row(row) =
          (center + options.radius * (std::cos(a) * u + std::sin(a) * v)).transpose();
      d.y(row) = std::sin(2.0 * kPi * t + phase);
      d.params(row, 0) = t;
      d.group_id[static_cast<std::size_t>(row)] = r;
    }
  }
  d.provenance = "rings(dim=" + std::to_string(dim) + ",n_rings=" + std::to_string(n_rings) +
                 ",n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")";
  return d;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: '" + path + "' is empty");
  const std::vector<std::string> header = split_line(line);

  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };

  std::vector<int> input_cols;
  std::vector<std::string> input_names;
  if (!schema.input_columns.empty()) {
    for (const auto& name : schema.input_columns) {
      const int c = find_col(name);
      if (c < 0) throw std::runtime_error("load_csv: missing input column '" + name + "'");
      input_cols.push_back(c);
      input_names.push_back(name);
    }
  } else {
    for (int k = 1;; ++k) {
      const std::string name = "x" + std::to_string(k);
      const int c = find_col(name);
      if (c < 0) break;
      input_cols.push_back(c);
      input_names.push_back(name);
    }
    if (input_cols.empty()) {
      throw std::runtime_error("load_csv: no input columns x1.. found in '" + path + "'");
    }
  }
  // An empty target name means "inputs only" (prediction-time CSVs).
  const int target_col = schema.target_column.empty() ? -1 : find_col(schema.target_column);
  if (target_col < 0 && !schema.target_column.empty()) {
    throw std::runtime_error("load_csv: missing target column '" + schema.target_column + "'");
  }
  const int group_col = find_col(schema.group_column);
  const int noise_col = find_col(schema.noise_column);
  const int clean_col = find_col(schema.clean_column);

  std::vector<std::vector<double>> xs;
  std::vector<double> ys, noises, cleans;
  std::vector<long> groups;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("load_csv: ragged row at line " + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    }
    std::vector<double> xrow(input_cols.size());
    for (std::size_t i = 0; i < input_cols.size(); ++i) {
      xrow[i] = parse_cell(cells[static_cast<std::size_t>(input_cols[i])], line_no,
                           input_names[i]);
    }
    xs.push_back(std::move(xrow));
    ys.push_back(target_col >= 0
                     ? parse_cell(cells[static_cast<std::size_t>(target_col)], line_no,
                                  schema.target_column)
                     : 0.0);
    if (group_col >= 0) {
      groups.push_back(static_cast<long>(parse_cell(
          cells[static_cast<std::size_t>(group_col)], line_no, schema.group_column)));
    }
    if (noise_col >= 0) {
      noises.push_back(parse_cell(cells[static_cast<std::size_t>(noise_col)], line_no,
                                  schema.noise_column));
    }
    if (clean_col >= 0) {
      cleans.push_back(parse_cell(cells[static_cast<std::size_t>(clean_col)], line_no,
                                  schema.clean_column));
    }
  }
  if (xs.empty()) throw std::runtime_error("load_csv: '" + path + "' has no data rows");

  Dataset d;
  const long n = static_cast<long>(xs.size());
  d.x.resize(n, static_cast<Eigen::Index>(input_cols.size()));
  d.y.resize(n);
  for (long r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < input_cols.size(); ++c) {
      d.x(r, static_cast<Eigen::Index>(c)) = xs[static_cast<std::size_t>(r)][c];
    }
    d.y(r) = ys[static_cast<std::size_t>(r)];
  }
  d.group_id = std::move(groups);
  if (!noises.empty()) {
    d.noise_floor = Eigen::Map<Eigen::VectorXd>(noises.data(), n);
  }
  if (!cleans.empty()) {
    d.clean = Eigen::Map<Eigen::VectorXd>(cleans.data(), n);
  }
  d.provenance = "csv(" + path + ")";
  return d;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open '" + path + "' for writing");
  std::string buf;
  for (int c = 0; c < data.dim(); ++c) {
    buf += "x" + std::to_string(c + 1) + ",";
  }
  buf += "y";
  if (!data.group_id.empty()) buf += ",group";
  if (data.noise_floor.size() > 0) buf += ",noise_floor";
  if (data.clean.size() > 0) buf += ",clean";
  for (Eigen::Index p = 0; p < data.params.cols(); ++p) {
    buf += data.params.cols() == 1 ? std::string(",t") : ",t" + std::to_string(p + 1);
  }
  buf += "\n";
  for (long r = 0; r < data.n(); ++r) {
    for (int c = 0; c < data.dim(); ++c) {
      format_double(buf, data.x(r, c));
      buf += ',';
    }
    format_double(buf, data.y(r));
    if (!data.group_id.empty()) {
      buf += ',' + std::to_string(data.group_id[static_cast<std::size_t>(r)]);
    }
    if (data.noise_floor.size() > 0) {
      buf += ',';
      format_double(buf, data.noise_floor(r));
    }
    if (data.clean.size() > 0) {
      buf += ',';
      format_double(buf, data.clean(r));
    }
    for (Eigen::Index p = 0; p < data.params.cols(); ++p) {
      buf += ',';
      format_double(buf, data.params(r, p));
    }
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

Dataset take_rows(const Dataset& data, const std::vector<long>& rows) {
  Dataset out;
  const long n = static_cast<long>(rows.size());
  out.x.resize(n, data.x.cols());
  out.y.resize(n);
  if (data.noise_floor.size() > 0) out.noise_floor.resize(n);
  if (data.clean.size() > 0) out.clean.resize(n);
  if (data.params.size() > 0) out.params.resize(n, data.params.cols());
  if (!data.group_id.empty()) out.group_id.resize(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const long r = rows[static_cast<std::size_t>(i)];
    out.x.row(i) = data.x.row(r);
    out.y(i) = data.y(r);
    if (data.noise_floor.size() > 0) out.noise_floor(i) = data.noise_floor(r);
    if (data.clean.size() > 0) out.clean(i) = data.clean(r);
    if (data.params.size() > 0) out.params.row(i) = data.params.row(r);
    if (!data.group_id.empty()) {
      out.group_id[static_cast<std::size_t>(i)] = data.group_id[static_cast<std::size_t>(r)];
    }
  }
  out.provenance = data.provenance;
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split: fraction must lie strictly between 0 and 1");
  }
  const long n = data.n();
  std::vector<long> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0L);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const long n_first = std::lround(fraction * static_cast<double>(n));
  if (n_first < 1 || n_first >= n) {
    throw std::invalid_argument("split: fraction " + std::to_string(fraction) +
                                " leaves an empty side for n = " + std::to_string(n));
  }
  std::vector<long> first(idx.begin(), idx.begin() + n_first);
  std::vector<long> second(idx.begin() + n_first, idx.end());
  return {take_rows(data, first), take_rows(data, second)};
}

}  // namespace ppou
