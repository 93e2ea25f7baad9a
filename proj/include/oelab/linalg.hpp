// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "oelab/error.hpp"

namespace oelab {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_dims(data_.size(), rows_ * cols_, "Matrix storage");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Lower-triangular matrix stored packed by rows: (0,0), (1,0), (1,1), (2,0), ...
class LowerTriangular {
 public:
  LowerTriangular() = default;
  explicit LowerTriangular(std::size_t dim) : dim_(dim), data_(dim * (dim + 1) / 2, 0.0) {}

  static LowerTriangular identity(std::size_t dim) {
    LowerTriangular l(dim);
    for (std::size_t i = 0; i < dim; ++i) l(i, i) = 1.0;
    return l;
  }

  /// Lower triangle of a dense square matrix; anything above the diagonal is ignored.
  static LowerTriangular from_dense(const Matrix& m) {
    detail::require_dims(m.cols(), m.rows(), "LowerTriangular::from_dense");
    LowerTriangular l(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j <= i; ++j) l(i, j) = m(i, j);
    return l;
  }

  static constexpr std::size_t index(std::size_t i, std::size_t j) noexcept {
    return i * (i + 1) / 2 + j;
  }

  std::size_t dim() const noexcept { return dim_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[index(i, j)]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[index(i, j)]; }

  /// Entry (i, j) with the implied zero upper triangle.
  double at(std::size_t i, std::size_t j) const { return j <= i ? data_[index(i, j)] : 0.0; }

  std::vector<double>& packed() noexcept { return data_; }
  const std::vector<double>& packed() const noexcept { return data_; }

  Matrix to_dense() const {
    Matrix m(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j <= i; ++j) m(i, j) = (*this)(i, j);
    return m;
  }

  /// L * L^T.
  Matrix gram() const {
    Matrix m(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k <= j; ++k) s += (*this)(i, k) * (*this)(j, k);
        m(i, j) = s;
        m(j, i) = s;
      }
    return m;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Cholesky factor of a symmetric positive-definite matrix.
///
/// The input is symmetrized as (A + A^T) / 2 first; inputs whose asymmetry
/// exceeds 1e-10 (relative to the largest entry) are rejected.
inline LowerTriangular cholesky(const Matrix& a) {
  detail::require_dims(a.cols(), a.rows(), "cholesky: square matrix");
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * std::max(1.0, scale))
        throw Error("cholesky: matrix is not symmetric at (" + std::to_string(i) +
                                "," + std::to_string(j) + ")");

  LowerTriangular l(n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0))
      throw NotPositiveDefinite("cholesky: non-positive pivot at column " + std::to_string(j));
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.5 * (a(i, j) + a(j, i));
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / d;
    }
  }
  return l;
}

/// Solves L x = b by forward substitution.
inline Vector tri_solve_lower(const LowerTriangular& l, std::span<const double> b) {
  detail::require_dims(b.size(), l.dim(), "tri_solve_lower");
  Vector x(b.begin(), b.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

/// Solves L^T x = b by back substitution.
inline Vector tri_solve_upper(const LowerTriangular& l, std::span<const double> b) {
  detail::require_dims(b.size(), l.dim(), "tri_solve_upper");
  Vector x(b.begin(), b.end());
  for (std::size_t ii = x.size(); ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < x.size(); ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

/// (L L^T)^{-1} b.
inline Vector spd_solve(const LowerTriangular& l, std::span<const double> b) {
  return tri_solve_upper(l, tri_solve_lower(l, b));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(b.size(), a.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

/// u^T (L L^T)^{-1} u, evaluated as |L^{-1} u|^2.
inline double spd_quadform(const LowerTriangular& l, std::span<const double> u) {
  return squared_norm(tri_solve_lower(l, u));
}

inline Vector subtract(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(b.size(), a.size(), "subtract");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

/// A x.
inline Vector matvec(const Matrix& a, std::span<const double> x) {
  detail::require_dims(x.size(), a.cols(), "matvec");
  Vector y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
  return y;
}

/// A^T x.
inline Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  detail::require_dims(x.size(), a.rows(), "matvec_transposed");
  Vector y(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += x[r] * row[c];
  }
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::require_dims(b.rows(), a.cols(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace oelab
