// Small dense least squares via normal equations; sized for the polynomial
// surface fits (tens of columns at most).
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pamode/common.hpp"

namespace pamode {

// Solves min ||A c - y||_2 for column-count-many coefficients. Rows of A are
// packed contiguously. Throws RankDeficient when the normal matrix pivots
// collapse (degenerate design).
[[nodiscard]] inline std::vector<double> lstsq(const std::vector<double>& a, std::size_t rows,
                                               std::size_t cols, const std::vector<double>& y) {
  if (a.size() != rows * cols || y.size() != rows)
    throw std::invalid_argument("lstsq: bad dimensions");
  if (rows < cols) throw RankDeficient("lstsq: fewer rows than coefficients");

  // G = A^T A, b = A^T y.
  std::vector<double> g(cols * cols, 0.0), b(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a.data() + r * cols;
    for (std::size_t i = 0; i < cols; ++i) {
      b[i] += row[i] * y[r];
      for (std::size_t j = i; j < cols; ++j) g[i * cols + j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < i; ++j) g[i * cols + j] = g[j * cols + i];

  // Gaussian elimination with partial pivoting on the SPD normal matrix;
  // pivot collapse relative to the largest diagonal signals rank deficiency.
  double scale = 0.0;
  for (std::size_t i = 0; i < cols; ++i) scale = std::max(scale, std::abs(g[i * cols + i]));
  if (scale == 0.0) throw RankDeficient("lstsq: zero design matrix");

  std::vector<std::size_t> perm(cols);
  for (std::size_t i = 0; i < cols; ++i) perm[i] = i;
  for (std::size_t k = 0; k < cols; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < cols; ++r)
      if (std::abs(g[r * cols + k]) > std::abs(g[piv * cols + k])) piv = r;
    if (piv != k) {
      for (std::size_t c = 0; c < cols; ++c) std::swap(g[k * cols + c], g[piv * cols + c]);
      std::swap(b[k], b[piv]);
    }
    const double p = g[k * cols + k];
    if (std::abs(p) < 1e-12 * scale) throw RankDeficient("lstsq: rank-deficient design");
    for (std::size_t r = k + 1; r < cols; ++r) {
      const double f = g[r * cols + k] / p;
      if (f == 0.0) continue;
      for (std::size_t c = k; c < cols; ++c) g[r * cols + c] -= f * g[k * cols + c];
      b[r] -= f * b[k];
    }
  }
  std::vector<double> c(cols, 0.0);
  for (std::size_t k = cols; k-- > 0;) {
    double acc = b[k];
    for (std::size_t j = k + 1; j < cols; ++j) acc -= g[k * cols + j] * c[j];
    c[k] = acc / g[k * cols + k];
  }
  return c;
}

}  // namespace pamode
