#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qnopt/model.hpp"
#include "qnopt/numerics.hpp"

namespace qnopt {

/// Rectangular numeric dataset; immutable after construction apart from
/// normalization, which records the statistics it applied.
struct Dataset {
  std::vector<double> features;  // rows x n_features, row-major
  std::vector<double> targets;   // rows x n_outputs, row-major
  std::size_t rows = 0;
  std::size_t n_features = 0;
  std::size_t n_outputs = 0;
  std::string name;

  // Populated by znormalize / apply_normalization; empty otherwise.
  std::vector<double> feature_mean, feature_std;
  std::vector<double> target_mean, target_std;

  /// View over rows [begin, end).
  Batch batch(std::size_t begin, std::size_t end) const;
  /// View over every row.
  Batch all() const { return batch(0, rows); }
};

/// Which CSV columns hold the targets; the rest are features.
struct TargetSpec {
  enum class Kind { first, last, indices };
  Kind kind = Kind::last;
  std::vector<std::size_t> indices;  // used when kind == indices

  static TargetSpec first() { return {Kind::first, {}}; }
  static TargetSpec last() { return {Kind::last, {}}; }
};

/// Loads a numeric CSV. Delimiter (comma or semicolon) and a single header
/// line are auto-detected. Row order is preserved.
Dataset load_csv(const std::string& path, std::size_t n_features, const TargetSpec& targets);

/// Writes features then targets per row, comma-separated, no header.
void write_csv(const Dataset& ds, const std::string& path);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t shuffle_seed = 0;
};

/// Deterministic shuffled split: floor(fraction * rows) train rows, the rest
/// test. Throws ArgumentError when either side would be empty.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

/// Z-normalizes every feature and target column in place. Statistics come
/// from stats_rows (all rows when empty) and are applied to all rows, then
/// stored on the dataset. Throws NormalizationError on zero-variance columns.
void znormalize(Dataset& ds, std::span<const std::size_t> stats_rows = {});

/// Applies the statistics recorded on `stats_from` (its train-split record)
/// to `ds`, so the test split never contributes to the statistics.
void apply_normalization(Dataset& ds, const Dataset& stats_from);

/// Least-squares problem whose model-module objective (linear [d,1] network,
/// mse loss) is a strongly convex quadratic with exact condition number
/// `cond` and a closed-form minimizer.
struct SynthProblem {
  Dataset data;
  Vector optimum;       // d weights then 1 bias, model parameter layout
  double optimum_loss;  // objective value at the optimum
};

/// n_samples defaults to 8d+32. `noise` adds uniform noise of that amplitude
/// to the targets; the returned optimum is the exact normal-equations solution
/// either way. Requires n_samples > d + 1.
SynthProblem synth_quadratic(std::size_t d, double cond, std::uint64_t seed,
                             std::size_t n_samples = 0, double noise = 0.0);

/// Nonlinear regression data from a randomly weighted sigmoid teacher network
/// plus uniform noise; used for desk-scale optimizer benchmarks. `corr` in
/// [0,1) mixes a shared factor into every feature (equicorrelated columns,
/// unit variance), so the conditioning survives per-column z-normalization
/// the way real tabular data does.
Dataset synth_regression(const std::vector<std::size_t>& teacher_layers, std::size_t rows,
                         std::uint64_t seed, double noise, double corr = 0.0);

}  // namespace qnopt
