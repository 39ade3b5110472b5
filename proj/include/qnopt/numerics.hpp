#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "qnopt/errors.hpp"

namespace qnopt {

using Vector = std::vector<double>;

/// Inner product with fixed (index-order) summation.
double dot(const Vector& a, const Vector& b);

double norm2(const Vector& a);
double norm_inf(const Vector& a);

/// y += alpha * x
void axpy(double alpha, const Vector& x, Vector& y);

Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scaled(const Vector& a, double s);

bool all_finite(const Vector& a);

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Vector matvec(const Matrix& m, const Vector& x);

/// Largest |H(i,j) - H(j,i)| over a square matrix.
double max_asymmetry(const Matrix& h);

/// BFGS inverse-Hessian update
///   H' = (I - s y^T / y^T s) H (I - y s^T / y^T s) + s s^T / y^T s
/// computed in O(d^2) without forming the intermediate outer products.
/// Throws CurvatureError when y^T s <= 0.
Matrix rank_updates_bfgs(const Matrix& h, const Vector& s, const Vector& y);

/// Cholesky factor (lower triangular) or nullopt when the matrix is not
/// positive definite. Used as the PD check on small dense matrices.
std::optional<Matrix> cholesky(const Matrix& h);

/// Deterministic generator: identical seeds give bit-identical streams on
/// every platform (mt19937_64 plus fixed integer/double conversions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent sub-stream for (seed, stream); adding a consumer of one
  /// stream never perturbs draws from another.
  static Rng substream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform in [0, n), rejection-sampled (no modulo bias). n must be > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 gen_;
};

/// SplitMix64 finalizer; the documented mixing function behind Rng::substream.
std::uint64_t splitmix64(std::uint64_t z);

/// Seed of the (seed, stream) sub-stream; Rng::substream(seed, stream) is
/// Rng(substream_seed(seed, stream)).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

/// d i.i.d. draws from [lo, hi). Throws ArgumentError when lo >= hi.
Vector uniform_init(Rng& rng, std::size_t d, double lo, double hi);

}  // namespace qnopt
