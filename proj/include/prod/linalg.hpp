#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prod/errors.hpp"

namespace prod::linalg {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Projects onto the closed unit ball; the loop absorbs the rare case where
// one rounding step leaves the norm a few ulps above 1.
inline void clamp_to_unit_ball(std::span<double> x) {
  double n = norm2(x);
  while (n > 1.0) {
    for (double& v : x) v /= n;
    n = norm2(x);
  }
}

// Dense square symmetric matrix, row-major. Sized for d <= 512.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(size_t d, double diag = 0.0) : d_(d), a_(d * d, 0.0) {
    for (size_t i = 0; i < d; ++i) a_[i * d + i] = diag;
  }

  size_t dim() const { return d_; }
  double& operator()(size_t i, size_t j) { return a_[i * d_ + j]; }
  double operator()(size_t i, size_t j) const { return a_[i * d_ + j]; }

  void add_outer(std::span<const double> phi, double w = 1.0) {
    for (size_t i = 0; i < d_; ++i) {
      const double wi = w * phi[i];
      double* row = &a_[i * d_];
      for (size_t j = 0; j < d_; ++j) row[j] += wi * phi[j];
    }
  }

  Vec matvec(std::span<const double> x) const {
    Vec y(d_, 0.0);
    for (size_t i = 0; i < d_; ++i) y[i] = dot(std::span(&a_[i * d_], d_), x);
    return y;
  }

 private:
  size_t d_ = 0;
  Vec a_;
};

// Cholesky factorization V = L L^T for symmetric positive-definite V.
class Cholesky {
 public:
  explicit Cholesky(const SymMatrix& v) : d_(v.dim()), l_(d_ * d_, 0.0) {
    for (size_t i = 0; i < d_; ++i) {
      for (size_t j = 0; j <= i; ++j) {
        double s = v(i, j);
        for (size_t k = 0; k < j; ++k) s -= l_[i * d_ + k] * l_[j * d_ + k];
        if (i == j) {
          if (s <= 0.0) throw NumericalError("matrix not positive definite (pivot " + std::to_string(i) + ")");
          l_[i * d_ + i] = std::sqrt(s);
        } else {
          l_[i * d_ + j] = s / l_[j * d_ + j];
        }
      }
    }
  }

  // Solves V x = b.
  Vec solve(std::span<const double> b) const {
    Vec x(b.begin(), b.end());
    for (size_t i = 0; i < d_; ++i) {  // L y = b
      double s = x[i];
      for (size_t k = 0; k < i; ++k) s -= l_[i * d_ + k] * x[k];
      x[i] = s / l_[i * d_ + i];
    }
    for (size_t ii = d_; ii-- > 0;) {  // L^T x = y
      double s = x[ii];
      for (size_t k = ii + 1; k < d_; ++k) s -= l_[k * d_ + ii] * x[k];
      x[ii] = s / l_[ii * d_ + ii];
    }
    return x;
  }

  // x^T V^{-1} x, nonnegative by construction.
  double inv_quad(std::span<const double> x) const {
    Vec y(x.begin(), x.end());
    for (size_t i = 0; i < d_; ++i) {
      double s = y[i];
      for (size_t k = 0; k < i; ++k) s -= l_[i * d_ + k] * y[k];
      y[i] = s / l_[i * d_ + i];
    }
    return dot(y, y);
  }

  double log_det() const {
    double s = 0.0;
    for (size_t i = 0; i < d_; ++i) s += std::log(l_[i * d_ + i]);
    return 2.0 * s;
  }

 private:
  size_t d_;
  Vec l_;
};

// Solves V x = b with one step of iterative refinement; residual lands near
// machine precision relative to ||b||.
inline Vec spd_solve(const SymMatrix& v, std::span<const double> b) {
  Cholesky chol(v);
  Vec x = chol.solve(b);
  Vec r(b.size());
  const Vec vx = v.matvec(x);
  for (size_t i = 0; i < b.size(); ++i) r[i] = b[i] - vx[i];
  const Vec dx = chol.solve(r);
  for (size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
  return x;
}

}  // namespace prod::linalg
