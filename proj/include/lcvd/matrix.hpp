#pragma once

#include <cstddef>
#include <vector>

namespace lcvd {

using Vec = std::vector<double>;

// Dense row-major double-precision matrix. Value semantics, no views.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  Vec row(std::size_t r) const {
    return Vec(values.begin() + static_cast<std::ptrdiff_t>(r * cols),
               values.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }

  bool operator==(const Matrix& other) const = default;
};

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

// y = A x. Requires x.size() == a.cols; y is resized to a.rows.
void matvec(const Matrix& a, const Vec& x, Vec& y);
// y = A^T x. Requires x.size() == a.rows; y is resized to a.cols.
void matvec_transposed(const Matrix& a, const Vec& x, Vec& y);
// A += scale * x y^T. Requires x.size() == a.rows, y.size() == a.cols.
void add_scaled_outer(Matrix& a, const Vec& x, const Vec& y, double scale);

double dot(const Vec& a, const Vec& b);

// Lower-triangular L with m = L L^T for a symmetric positive-definite input.
// Throws std::invalid_argument if the input is not square or a pivot is not
// strictly positive.
Matrix cholesky_factor(const Matrix& m);
// Solves (L L^T) x = b given the lower factor L.
Vec cholesky_solve(const Matrix& lower, const Vec& b);

}  // namespace lcvd
