#include "qnopt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace qnopt {

namespace {

std::string trim(std::string s) {
  const char* ws = " \t\r\n\"";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && !cell.empty();
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::vector<std::size_t> resolve_target_columns(const TargetSpec& spec, std::size_t total_cols,
                                                std::size_t n_features) {
  if (total_cols < n_features + 1) {
    throw SchemaError("load_csv: " + std::to_string(total_cols) + " columns cannot hold " +
                      std::to_string(n_features) + " features plus targets");
  }
  const std::size_t n_targets = total_cols - n_features;
  std::vector<std::size_t> cols;
  switch (spec.kind) {
    case TargetSpec::Kind::first:
      for (std::size_t i = 0; i < n_targets; ++i) cols.push_back(i);
      break;
    case TargetSpec::Kind::last:
      for (std::size_t i = total_cols - n_targets; i < total_cols; ++i) cols.push_back(i);
      break;
    case TargetSpec::Kind::indices:
      cols = spec.indices;
      if (cols.size() != n_targets) {
        throw SchemaError("load_csv: " + std::to_string(cols.size()) +
                          " target indices but column count implies " + std::to_string(n_targets));
      }
      for (std::size_t c : cols) {
        if (c >= total_cols) throw SchemaError("load_csv: target index out of range");
      }
      break;
  }
  return cols;
}

void column_stats(const std::vector<double>& data, std::size_t cols, std::size_t col,
                  std::span<const std::size_t> rows, double& mean, double& sd) {
  double acc = 0.0;
  for (std::size_t r : rows) acc += data[r * cols + col];
  mean = acc / static_cast<double>(rows.size());
  double var = 0.0;
  for (std::size_t r : rows) {
    const double d = data[r * cols + col] - mean;
    var += d * d;
  }
  sd = std::sqrt(var / static_cast<double>(rows.size()));
}

void normalize_column(std::vector<double>& data, std::size_t rows, std::size_t cols,
                      std::size_t col, double mean, double sd) {
  for (std::size_t r = 0; r < rows; ++r) {
    data[r * cols + col] = (data[r * cols + col] - mean) / sd;
  }
}

Dataset take_rows(const Dataset& ds, std::span<const std::size_t> rows, const std::string& suffix) {
  Dataset out;
  out.rows = rows.size();
  out.n_features = ds.n_features;
  out.n_outputs = ds.n_outputs;
  out.name = ds.name.empty() ? suffix : ds.name + "/" + suffix;
  out.features.reserve(rows.size() * ds.n_features);
  out.targets.reserve(rows.size() * ds.n_outputs);
  for (std::size_t r : rows) {
    out.features.insert(out.features.end(), ds.features.begin() + r * ds.n_features,
                        ds.features.begin() + (r + 1) * ds.n_features);
    out.targets.insert(out.targets.end(), ds.targets.begin() + r * ds.n_outputs,
                       ds.targets.begin() + (r + 1) * ds.n_outputs);
  }
  return out;
}

// Solve A x = b for symmetric positive definite A via Cholesky.
Vector spd_solve(const Matrix& a, const Vector& b) {
  const auto l = cholesky(a);
  if (!l) throw ArgumentError("spd_solve: matrix not positive definite");
  const std::size_t n = b.size();
  Vector y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= (*l)(i, k) * y[k];
    y[i] = v / (*l)(i, i);
  }
  Vector x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double v = y[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= (*l)(k, i) * x[k];
    x[i] = v / (*l)(i, i);
  }
  return x;
}

}  // namespace

Batch Dataset::batch(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > rows) throw ArgumentError("Dataset::batch: bad row range");
  Batch b;
  b.size = end - begin;
  b.input_dim = n_features;
  b.target_dim = n_outputs;
  b.inputs = std::span<const double>(features.data() + begin * n_features, b.size * n_features);
  b.targets = std::span<const double>(targets.data() + begin * n_outputs, b.size * n_outputs);
  return b;
}

Dataset load_csv(const std::string& path, std::size_t n_features, const TargetSpec& targets) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open " + path);

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    // Keep interior empties out; trailing newline produces one.
    if (trim(line).empty()) continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw SchemaError("load_csv: " + path + " has no rows");

  const std::size_t semis = std::count(lines[0].begin(), lines[0].end(), ';');
  const std::size_t commas = std::count(lines[0].begin(), lines[0].end(), ',');
  const char delim = semis > commas ? ';' : ',';

  // Header: first line with any non-numeric cell.
  std::size_t first_data = 0;
  {
    double tmp;
    for (const auto& cell : split_line(lines[0], delim)) {
      if (!parse_double(cell, tmp)) {
        first_data = 1;
        break;
      }
    }
  }
  if (first_data >= lines.size()) throw SchemaError("load_csv: " + path + " has a header but no data rows");

  const std::size_t total_cols = split_line(lines[first_data], delim).size();
  const auto target_cols = resolve_target_columns(targets, total_cols, n_features);
  std::vector<bool> is_target(total_cols, false);
  for (std::size_t c : target_cols) is_target[c] = true;

  Dataset ds;
  ds.n_features = n_features;
  ds.n_outputs = target_cols.size();
  ds.name = path;
  for (std::size_t li = first_data; li < lines.size(); ++li) {
    const auto cells = split_line(lines[li], delim);
    if (cells.size() != total_cols) {
      throw SchemaError("load_csv: row " + std::to_string(li + 1) + " has " +
                        std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(total_cols));
    }
    std::vector<double> row(total_cols);
    for (std::size_t c = 0; c < total_cols; ++c) {
      if (!parse_double(cells[c], row[c])) {
        throw ParseError("load_csv: non-numeric cell at row " + std::to_string(li + 1) +
                         ", column " + std::to_string(c + 1) + ": '" + cells[c] + "'");
      }
    }
    for (std::size_t c : target_cols) ds.targets.push_back(row[c]);
    for (std::size_t c = 0; c < total_cols; ++c) {
      if (!is_target[c]) ds.features.push_back(row[c]);
    }
    ++ds.rows;
  }
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path);
  char buf[32];
  for (std::size_t r = 0; r < ds.rows; ++r) {
    for (std::size_t c = 0; c < ds.n_features; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features[r * ds.n_features + c]);
      out << buf << ',';
    }
    for (std::size_t c = 0; c < ds.n_outputs; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.targets[r * ds.n_outputs + c]);
      out << buf << (c + 1 == ds.n_outputs ? '\n' : ',');
    }
  }
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ArgumentError("split: train_fraction must be in (0,1)");
  }
  const std::size_t n_train =
      static_cast<std::size_t>(spec.train_fraction * static_cast<double>(ds.rows));
  if (n_train == 0 || n_train >= ds.rows) {
    throw ArgumentError("split: degenerate split sizes for " + std::to_string(ds.rows) + " rows");
  }
  std::vector<std::size_t> perm(ds.rows);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(spec.shuffle_seed);
  for (std::size_t i = ds.rows - 1; i > 0; --i) {
    const std::size_t j = rng.below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  std::span<const std::size_t> all(perm);
  return {take_rows(ds, all.subspan(0, n_train), "train"), take_rows(ds, all.subspan(n_train), "test")};
}

void znormalize(Dataset& ds, std::span<const std::size_t> stats_rows) {
  std::vector<std::size_t> all;
  if (stats_rows.empty()) {
    all.resize(ds.rows);
    std::iota(all.begin(), all.end(), 0);
    stats_rows = all;
  }
  for (std::size_t r : stats_rows) {
    if (r >= ds.rows) throw ArgumentError("znormalize: stats row out of range");
  }
  ds.feature_mean.assign(ds.n_features, 0.0);
  ds.feature_std.assign(ds.n_features, 0.0);
  ds.target_mean.assign(ds.n_outputs, 0.0);
  ds.target_std.assign(ds.n_outputs, 0.0);
  for (std::size_t c = 0; c < ds.n_features; ++c) {
    double mean, sd;
    column_stats(ds.features, ds.n_features, c, stats_rows, mean, sd);
    if (sd <= 1e-12 * std::max(1.0, std::fabs(mean))) {
      throw NormalizationError("znormalize: zero-variance feature column " + std::to_string(c));
    }
    normalize_column(ds.features, ds.rows, ds.n_features, c, mean, sd);
    ds.feature_mean[c] = mean;
    ds.feature_std[c] = sd;
  }
  for (std::size_t c = 0; c < ds.n_outputs; ++c) {
    double mean, sd;
    column_stats(ds.targets, ds.n_outputs, c, stats_rows, mean, sd);
    if (sd <= 1e-12 * std::max(1.0, std::fabs(mean))) {
      throw NormalizationError("znormalize: zero-variance target column " + std::to_string(c));
    }
    normalize_column(ds.targets, ds.rows, ds.n_outputs, c, mean, sd);
    ds.target_mean[c] = mean;
    ds.target_std[c] = sd;
  }
}

void apply_normalization(Dataset& ds, const Dataset& stats_from) {
  if (stats_from.feature_mean.size() != ds.n_features ||
      stats_from.target_mean.size() != ds.n_outputs) {
    throw ArgumentError("apply_normalization: stats_from has no matching statistics record");
  }
  for (std::size_t c = 0; c < ds.n_features; ++c) {
    normalize_column(ds.features, ds.rows, ds.n_features, c, stats_from.feature_mean[c],
                     stats_from.feature_std[c]);
  }
  for (std::size_t c = 0; c < ds.n_outputs; ++c) {
    normalize_column(ds.targets, ds.rows, ds.n_outputs, c, stats_from.target_mean[c],
                     stats_from.target_std[c]);
  }
  ds.feature_mean = stats_from.feature_mean;
  ds.feature_std = stats_from.feature_std;
  ds.target_mean = stats_from.target_mean;
  ds.target_std = stats_from.target_std;
}

SynthProblem synth_quadratic(std::size_t d, double cond, std::uint64_t seed,
                             std::size_t n_samples, double noise) {
  if (d < 1) throw ArgumentError("synth_quadratic: d must be >= 1");
  if (!(cond >= 1.0)) throw ArgumentError("synth_quadratic: cond must be >= 1");
  const std::size_t n = n_samples == 0 ? 8 * d + 32 : n_samples;
  if (n <= d + 1) throw ArgumentError("synth_quadratic: need n_samples > d + 1");
  Rng rng(seed);

  // Orthonormal columns u_1..u_d, all orthogonal to the constant column, so
  // the bias coordinate decouples and the Hessian spectrum is exactly
  // {lambda_1..lambda_d, 1}.
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<Vector> basis;
  basis.push_back(Vector(n, inv_sqrt_n));
  while (basis.size() < d + 1) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    for (const Vector& u : basis) axpy(-dot(u, v), u, v);
    const double nrm = norm2(v);
    if (nrm < 1e-6) continue;
    for (double& x : v) x /= nrm;
    basis.push_back(std::move(v));
  }

  std::vector<double> lambda(d);
  for (std::size_t j = 0; j < d; ++j) {
    lambda[j] = d == 1 ? cond : std::pow(cond, static_cast<double>(j) / static_cast<double>(d - 1));
  }

  Dataset ds;
  ds.rows = n;
  ds.n_features = d;
  ds.n_outputs = 1;
  ds.name = "synth_quadratic";
  ds.features.assign(n * d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double scale = std::sqrt(static_cast<double>(n) * lambda[j]);
    for (std::size_t i = 0; i < n; ++i) ds.features[i * d + j] = scale * basis[j + 1][i];
  }

  Vector w_true(d);
  for (double& x : w_true) x = rng.uniform(-1.0, 1.0);
  const double b_true = rng.uniform(-1.0, 1.0);
  ds.targets.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double y = b_true;
    for (std::size_t j = 0; j < d; ++j) y += ds.features[i * d + j] * w_true[j];
    if (noise > 0.0) y += noise * rng.uniform(-1.0, 1.0);
    ds.targets[i] = y;
  }

  // Exact minimizer from the normal equations on [X 1].
  Matrix a(d + 1, d + 1, 0.0);
  Vector rhs(d + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= d; ++j) {
      const double xj = j < d ? ds.features[i * d + j] : 1.0;
      rhs[j] += xj * ds.targets[i];
      for (std::size_t k = 0; k <= d; ++k) {
        const double xk = k < d ? ds.features[i * d + k] : 1.0;
        a(j, k) += xj * xk;
      }
    }
  }
  SynthProblem prob;
  prob.data = std::move(ds);
  prob.optimum = spd_solve(a, rhs);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = prob.optimum[d] - prob.data.targets[i];
    for (std::size_t j = 0; j < d; ++j) r += prob.data.features[i * d + j] * prob.optimum[j];
    acc += 0.5 * r * r;
  }
  prob.optimum_loss = acc / static_cast<double>(n);
  return prob;
}

Dataset synth_regression(const std::vector<std::size_t>& teacher_layers, std::size_t rows,
                         std::uint64_t seed, double noise, double corr) {
  NetworkSpec teacher;
  teacher.layer_sizes = teacher_layers;
  teacher.validate();
  if (teacher.loss_kind != LossKind::mse) throw ArgumentError("synth_regression: teacher must be regression");
  if (!(corr >= 0.0 && corr < 1.0)) throw ArgumentError("synth_regression: corr must be in [0,1)");
  Rng rng(seed);
  Vector w = uniform_init(rng, param_count(teacher), -1.5, 1.5);

  Dataset ds;
  ds.rows = rows;
  ds.n_features = teacher_layers.front();
  ds.n_outputs = teacher_layers.back();
  ds.name = "synth_mlp";
  ds.features.assign(rows * ds.n_features, 0.0);
  ds.targets.assign(rows * ds.n_outputs, 0.0);
  const double amp = std::sqrt(3.0);  // unit-variance uniform draws
  const double c_shared = std::sqrt(corr);
  const double c_own = std::sqrt(1.0 - corr);
  Vector x(ds.n_features);
  for (std::size_t r = 0; r < rows; ++r) {
    const double shared = rng.uniform(-amp, amp);
    for (std::size_t c = 0; c < ds.n_features; ++c) {
      x[c] = c_shared * shared + c_own * rng.uniform(-amp, amp);
      ds.features[r * ds.n_features + c] = x[c];
    }
    const Vector y = predict(teacher, w, x);
    for (std::size_t c = 0; c < ds.n_outputs; ++c) {
      ds.targets[r * ds.n_outputs + c] = y[c] + (noise > 0.0 ? noise * rng.uniform(-1.0, 1.0) : 0.0);
    }
  }
  return ds;
}

}  // namespace qnopt
