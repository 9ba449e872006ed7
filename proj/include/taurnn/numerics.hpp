#pragma once

// Dense row-major linear algebra and elementwise nonlinearities used by the
// recurrent cells, the BPTT engine and the DDE integrator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace taurnn {

/// Thrown when operand shapes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
      : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix zeros(std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols);
  }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix diag(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }
  static Matrix diag(std::initializer_list<double> d) {
    return diag(std::span<const double>(d.begin(), d.size()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

namespace detail {

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void require_same_length(const char* op, const Vector& a,
                                const Vector& b) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": length mismatch " +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

}  // namespace detail

/// out += m * v
inline void matvec_acc(const Matrix& m, const Vector& v, Vector& out) {
  if (m.cols() != v.size() || m.rows() != out.size()) {
    throw ShapeError("matvec: matrix " + shape_string(m) + " vs vector " +
                     std::to_string(v.size()) + " -> " +
                     std::to_string(out.size()));
  }
  const std::size_t cols = m.cols();
  const double* md = m.data();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out[r] += detail::dot(md + r * cols, v.data(), cols);
  }
}

inline Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size()) {
    throw ShapeError("matvec: matrix " + shape_string(m) + " vs vector " +
                     std::to_string(v.size()));
  }
  Vector out(m.rows());
  matvec_acc(m, v, out);
  return out;
}

/// out += m^T * v
inline void matvec_transposed_acc(const Matrix& m, const Vector& v,
                                  Vector& out) {
  if (m.rows() != v.size() || m.cols() != out.size()) {
    throw ShapeError("matvec_transposed: matrix " + shape_string(m) +
                     " vs vector " + std::to_string(v.size()));
  }
  const std::size_t cols = m.cols();
  double* o = out.data();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double s = v[r];
    if (s == 0.0) continue;
    const double* row = m.data() + r * cols;
#pragma omp simd
    for (std::size_t c = 0; c < cols; ++c) o[c] += s * row[c];
  }
}

/// m += a * b^T
inline void outer_acc(Matrix& m, const Vector& a, const Vector& b) {
  if (m.rows() != a.size() || m.cols() != b.size()) {
    throw ShapeError("outer: matrix " + shape_string(m) + " vs " +
                     std::to_string(a.size()) + "x" +
                     std::to_string(b.size()));
  }
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double s = a[r];
    if (s == 0.0) continue;
    double* row = m.data() + r * cols;
#pragma omp simd
    for (std::size_t c = 0; c < cols; ++c) row[c] += s * b[c];
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a) + " * " + shape_string(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += s * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("matrix add: " + shape_string(a) + " + " +
                     shape_string(b));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("matrix sub: " + shape_string(a) + " - " +
                     shape_string(b));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& x : out.span()) x *= s;
  return out;
}

inline Matrix matrix_power(const Matrix& a, std::size_t k) {
  if (a.rows() != a.cols()) {
    throw ShapeError("matrix_power: non-square " + shape_string(a));
  }
  Matrix out = Matrix::identity(a.rows());
  for (std::size_t i = 0; i < k; ++i) out = matmul(out, a);
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

#if defined(__GLIBC__) && defined(__x86_64__)
// Exposes glibc's libmvec variants of exp to `omp simd` loops.
extern "C" double exp(double) noexcept __attribute__((__simd__("notinbranch")));
inline double simd_exp(double x) { return detail::exp(x); }
#else
inline double simd_exp(double x) { return std::exp(x); }
#endif

}  // namespace detail

/// Elementwise tanh over n values, computed as 1 - 2 / (e^{2x} + 1)
/// (absolute error a few ulp, saturating exactly to +-1).
inline void tanh_inplace(double* x, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 1.0 - 2.0 / (detail::simd_exp(2.0 * x[i]) + 1.0);
  }
}

/// Elementwise logistic function; underflows to exactly 0 for x < -745.
inline void sigmoid_inplace(double* x, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 1.0 / (1.0 + detail::simd_exp(-x[i]));
  }
}

inline Vector tanh_vec(const Vector& v) {
  Vector out = v;
  tanh_inplace(out.data(), out.size());
  return out;
}

inline Vector sigmoid_vec(const Vector& v) {
  Vector out = v;
  sigmoid_inplace(out.data(), out.size());
  return out;
}

inline Vector hadamard(const Vector& a, const Vector& b) {
  detail::require_same_length("hadamard", a, b);
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// alpha * x + y
inline Vector axpy(double alpha, const Vector& x, const Vector& y) {
  detail::require_same_length("axpy", x, y);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i] + y[i];
  return out;
}

inline double dot(const Vector& a, const Vector& b) {
  detail::require_same_length("dot", a, b);
  return detail::dot(a.data(), b.data(), a.size());
}

inline double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

/// Maximum absolute row sum.
inline double inf_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double x : m.row(r)) s += std::abs(x);
    best = std::max(best, s);
  }
  return best;
}

/// Power iteration did not reach the requested tolerance.
class NormNotConverged : public std::runtime_error {
 public:
  NormNotConverged(double estimate, std::size_t iterations)
      : std::runtime_error("operator_norm: no convergence after " +
                           std::to_string(iterations) +
                           " iterations, last estimate " +
                           std::to_string(estimate)),
        estimate_(estimate) {}
  double estimate() const noexcept { return estimate_; }

 private:
  double estimate_;
};

/// Spectral norm (largest singular value) by power iteration on M^T M.
///
/// Stops once the eigen-residual |M^T M v - lambda v| falls below
/// `rel_tol * lambda`, or once the Rayleigh quotient stagnates at round-off
/// level (nearly degenerate leading singular values).
inline double operator_norm(const Matrix& m, double rel_tol = 1e-10,
                            std::size_t max_iter = 10'000) {
  if (m.size() == 0) return 0.0;
  if (!all_finite(m.span())) {
    throw std::domain_error("operator_norm: non-finite entry");
  }
  const std::size_t n = m.cols();
  // Fixed pseudo-random start vector; a constant start can be orthogonal to
  // the leading singular vector for structured matrices.
  Vector v(n);
  std::uint64_t s = 0x9E3779B97F4A7C15ULL;
  for (std::size_t i = 0; i < n; ++i) {
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    v[i] = 0.5 + static_cast<double>((s * 0x2545F4914F6CDD1DULL) >> 11) *
                     0x1.0p-53;
  }
  double nv = norm2(v);
  for (double& x : v) x /= nv;

  double lambda = 0.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Vector mv = matvec(m, v);
    Vector w(n);
    matvec_transposed_acc(m, mv, w);  // w = M^T M v
    const double next = dot(v, w);    // Rayleigh quotient, |v| = 1
    if (next == 0.0) return 0.0;
    double res2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = w[i] - next * v[i];
      res2 += r * r;
    }
    const bool residual_ok = std::sqrt(res2) <= rel_tol * next;
    const bool stagnated =
        it > 1 && std::abs(next - lambda) <= 1e-15 * next;
    lambda = next;
    if (residual_ok || stagnated) return std::sqrt(lambda);
    const double nw = norm2(w);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
  }
  throw NormNotConverged(std::sqrt(lambda), max_iter);
}

}  // namespace taurnn
