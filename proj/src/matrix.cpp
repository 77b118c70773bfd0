#include "lcvd/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace lcvd {

bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool all_finite(const Matrix& m) { return all_finite(m.values); }

void matvec(const Matrix& a, const Vec& x, Vec& y) {
  if (x.size() != a.cols) throw std::invalid_argument("matvec: dimension mismatch");
  y.assign(a.rows, 0.0);
  const double* row = a.values.data();
  for (std::size_t r = 0; r < a.rows; ++r, row += a.cols) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_transposed(const Matrix& a, const Vec& x, Vec& y) {
  if (x.size() != a.rows) {
    throw std::invalid_argument("matvec_transposed: dimension mismatch");
  }
  y.assign(a.cols, 0.0);
  const double* row = a.values.data();
  for (std::size_t r = 0; r < a.rows; ++r, row += a.cols) {
    const double xr = x[r];
    for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
  }
}

void add_scaled_outer(Matrix& a, const Vec& x, const Vec& y, double scale) {
  if (x.size() != a.rows || y.size() != a.cols) {
    throw std::invalid_argument("add_scaled_outer: dimension mismatch");
  }
  double* row = a.values.data();
  for (std::size_t r = 0; r < a.rows; ++r, row += a.cols) {
    const double s = scale * x[r];
    for (std::size_t c = 0; c < a.cols; ++c) row[c] += s * y[c];
  }
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Matrix cholesky_factor(const Matrix& m) {
  if (m.rows != m.cols) throw std::invalid_argument("cholesky_factor: not square");
  const std::size_t n = m.rows;
  Matrix lower(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = m(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= lower(i, k) * lower(j, k);
      if (i == j) {
        if (acc <= 0.0 || !std::isfinite(acc)) {
          throw std::invalid_argument("cholesky_factor: input is not positive-definite");
        }
        lower(i, j) = std::sqrt(acc);
      } else {
        lower(i, j) = acc / lower(j, j);
      }
    }
  }
  return lower;
}

Vec cholesky_solve(const Matrix& lower, const Vec& b) {
  const std::size_t n = lower.rows;
  if (b.size() != n) throw std::invalid_argument("cholesky_solve: dimension mismatch");
  // Forward substitution L z = b, then back substitution L^T x = z.
  Vec z(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < i; ++k) acc -= lower(i, k) * z[k];
    z[i] = acc / lower(i, i);
  }
  Vec x(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = z[ii];
    for (std::size_t k = ii + 1; k < n; ++k) acc -= lower(k, ii) * x[k];
    x[ii] = acc / lower(ii, ii);
  }
  return x;
}

}  // namespace lcvd
