#include "qnopt/numerics.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace qnopt {

namespace {

void require_same_length(const Vector& a, const Vector& b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": length mismatch " +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

}  // namespace

double dot(const Vector& a, const Vector& b) {
  require_same_length(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

double norm_inf(const Vector& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

void axpy(double alpha, const Vector& x, Vector& y) {
  require_same_length(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector add(const Vector& a, const Vector& b) {
  require_same_length(a, b, "add");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vector sub(const Vector& a, const Vector& b) {
  require_same_length(a, b, "sub");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Vector scaled(const Vector& a, double s) {
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

bool all_finite(const Vector& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector matvec(const Matrix& m, const Vector& x) {
  if (m.cols() != x.size()) {
    throw DimensionError("matvec: " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " times length " + std::to_string(x.size()));
  }
  Vector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

double max_asymmetry(const Matrix& h) {
  if (h.rows() != h.cols()) throw DimensionError("max_asymmetry: matrix not square");
  double m = 0.0;
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t j = i + 1; j < h.cols(); ++j) {
      m = std::max(m, std::fabs(h(i, j) - h(j, i)));
    }
  }
  return m;
}

Matrix rank_updates_bfgs(const Matrix& h, const Vector& s, const Vector& y) {
  const std::size_t d = s.size();
  if (h.rows() != d || h.cols() != d || y.size() != d) {
    throw DimensionError("rank_updates_bfgs: inconsistent dimensions");
  }
  const double ys = dot(y, s);
  if (ys <= 0.0) {
    throw CurvatureError("rank_updates_bfgs: y^T s = " + std::to_string(ys) + " <= 0");
  }
  const double rho = 1.0 / ys;

  // Expansion of (I - rho s y^T) H (I - rho y s^T) + rho s s^T for symmetric H:
  //   H - rho (s (Hy)^T + (Hy) s^T) + rho (1 + rho y^T H y) s s^T
  const Vector hy = matvec(h, y);
  const double yhy = dot(y, hy);
  const double c = rho * (1.0 + rho * yhy);

  Matrix out(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out(i, j) = h(i, j) - rho * (s[i] * hy[j] + hy[i] * s[j]) + c * s[i] * s[j];
    }
  }
  return out;
}

std::optional<Matrix> cholesky(const Matrix& h) {
  if (h.rows() != h.cols()) throw DimensionError("cholesky: matrix not square");
  const std::size_t n = h.rows();
  Matrix l(n, n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = h(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) return std::nullopt;
    l(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = h(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return l;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream));
}

Rng::Rng(std::uint64_t seed) : gen_(seed) {}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(substream_seed(seed, stream));
}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) throw ArgumentError("uniform: lo >= hi");
  return lo + next_double() * (hi - lo);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("below: n must be > 0");
  const std::uint64_t reject = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= reject) return r % n;
  }
}

Vector uniform_init(Rng& rng, std::size_t d, double lo, double hi) {
  if (!(lo < hi)) throw ArgumentError("uniform_init: lo >= hi");
  Vector out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = lo + rng.next_double() * (hi - lo);
  return out;
}

}  // namespace qnopt
