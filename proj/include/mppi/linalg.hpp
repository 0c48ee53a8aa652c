#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "mppi/errors.hpp"

namespace mppi {

// Small dense row-major matrix. Input dimensions here are tiny (m <= 4), so
// nothing clever is needed.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (int i = 0; i < m.rows(); ++i) m(i, i) = d[i];
    return m;
  }

  static Matrix scalar(double value) {
    Matrix m(1, 1);
    m(0, 0) = value;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool is_symmetric(double tol = 1e-12) const {
    if (rows_ != cols_) return false;
    for (int i = 0; i < rows_; ++i)
      for (int j = i + 1; j < cols_; ++j)
        if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
    return true;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Lower-triangular Cholesky factor of an SPD matrix. Factorization failure is
// the non-SPD error path everywhere a covariance enters the library.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : n_(a.rows()), l_(static_cast<std::size_t>(n_) * n_, 0.0) {
    if (a.rows() != a.cols() || a.rows() == 0)
      throw config_error("covariance must be square and non-empty");
    if (!a.is_symmetric(1e-9))
      throw config_error("covariance must be symmetric");
    for (int j = 0; j < n_; ++j) {
      double d = a(j, j);
      for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
      if (!(d > 0.0) || !std::isfinite(d))
        throw config_error("covariance is not positive definite");
      l(j, j) = std::sqrt(d);
      for (int i = j + 1; i < n_; ++i) {
        double s = a(i, j);
        for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        l(i, j) = s / l(j, j);
      }
    }
  }

  int dim() const { return n_; }

  // y = L z  (z standard normal -> y ~ N(0, A))
  void apply_factor(std::span<const double> z, std::span<double> y) const {
    for (int i = 0; i < n_; ++i) {
      double s = 0.0;
      for (int k = 0; k <= i; ++k) s += l(i, k) * z[k];
      y[i] = s;
    }
  }

  // b := A^{-1} b via forward then backward substitution.
  void solve_in_place(std::span<double> b) const {
    for (int i = 0; i < n_; ++i) {
      double s = b[i];
      for (int k = 0; k < i; ++k) s -= l(i, k) * b[k];
      b[i] = s / l(i, i);
    }
    for (int i = n_ - 1; i >= 0; --i) {
      double s = b[i];
      for (int k = i + 1; k < n_; ++k) s -= l(k, i) * b[k];
      b[i] = s / l(i, i);
    }
  }

  // a^T A^{-1} b
  double quadratic_inverse(std::span<const double> a, std::span<const double> b) const {
    double buf[8];
    std::vector<double> heap;
    std::span<double> x;
    if (n_ <= 8) {
      x = std::span<double>(buf, static_cast<std::size_t>(n_));
    } else {
      heap.resize(static_cast<std::size_t>(n_));
      x = heap;
    }
    for (int i = 0; i < n_; ++i) x[i] = b[i];
    solve_in_place(x);
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += a[i] * x[i];
    return s;
  }

 private:
  double& l(int i, int j) { return l_[static_cast<std::size_t>(i) * n_ + j]; }
  double l(int i, int j) const { return l_[static_cast<std::size_t>(i) * n_ + j]; }

  int n_ = 0;
  std::vector<double> l_;
};

}  // namespace mppi
