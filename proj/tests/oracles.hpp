#pragma once

// Independent reference implementations used only by the test suites. All of
// them are built straight from definitions (explicit dense matrices, literal
// loops), never from the library's optimized code paths, so they can serve
// as oracles for it.

#include <cmath>
#include <cstdint>
#include <vector>

#include "epiloc/rng.hpp"
#include "epiloc/types.hpp"

namespace oracle {

using epiloc::ChannelStack;
using epiloc::Matrix2;

/// Literal definition of same-shape correlation with zero padding.
inline Matrix2 naive_corr(const Matrix2 &x, const Matrix2 &k) {
  const int cr = k.rows / 2, cc = k.cols / 2;
  Matrix2 out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) {
      double s = 0.0;
      for (int a = 0; a < k.rows; ++a)
        for (int b = 0; b < k.cols; ++b) {
          const int xi = i + a - cr, xj = j + b - cc;
          if (xi >= 0 && xi < x.rows && xj >= 0 && xj < x.cols)
            s += x(xi, xj) * k(a, b);
        }
      out(i, j) = s;
    }
  return out;
}

/// Literal definition of same-shape convolution (kernel flipped both ways).
inline Matrix2 naive_conv(const Matrix2 &x, const Matrix2 &k) {
  const int cr = k.rows / 2, cc = k.cols / 2;
  Matrix2 out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) {
      double s = 0.0;
      for (int a = 0; a < k.rows; ++a)
        for (int b = 0; b < k.cols; ++b) {
          const int xi = i - (a - cr), xj = j - (b - cc);
          if (xi >= 0 && xi < x.rows && xj >= 0 && xj < x.cols)
            s += x(xi, xj) * k(a, b);
        }
      out(i, j) = s;
    }
  return out;
}

/// Explicit dense matrix of the dictionary operator: out = A * vec(Z) where
/// vec stacks channels row-major. Built column by column from the
/// convolution definition.
struct DenseOp {
  int rows = 0, cols = 0, channels = 0;
  // a[row_index][col_index], row index = i*cols + j over the output grid,
  // col index = (m*rows + p)*cols + q over the code stack.
  std::vector<std::vector<double>> a;

  std::size_t out_dim() const { return static_cast<std::size_t>(rows) * cols; }
  std::size_t in_dim() const { return out_dim() * channels; }
};

inline DenseOp build_dense(const ChannelStack &d, int rows, int cols) {
  DenseOp op;
  op.rows = rows;
  op.cols = cols;
  op.channels = d.channels;
  op.a.assign(op.out_dim(), std::vector<double>(op.in_dim(), 0.0));
  const int cr = d.rows / 2, cc = d.cols / 2;
  for (int m = 0; m < d.channels; ++m)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        for (int a = 0; a < d.rows; ++a)
          for (int b = 0; b < d.cols; ++b) {
            const int p = i - (a - cr), q = j - (b - cc);
            if (p >= 0 && p < rows && q >= 0 && q < cols)
              op.a[static_cast<std::size_t>(i) * cols + j]
                  [(static_cast<std::size_t>(m) * rows + p) * cols + q] +=
                  d.at(m, a, b);
          }
  return op;
}

inline std::vector<double> apply(const DenseOp &op, const std::vector<double> &z) {
  std::vector<double> out(op.out_dim(), 0.0);
  for (std::size_t r = 0; r < op.out_dim(); ++r)
    for (std::size_t c = 0; c < op.in_dim(); ++c)
      out[r] += op.a[r][c] * z[c];
  return out;
}

inline std::vector<double> apply_transpose(const DenseOp &op,
                                           const std::vector<double> &y) {
  std::vector<double> out(op.in_dim(), 0.0);
  for (std::size_t r = 0; r < op.out_dim(); ++r)
    for (std::size_t c = 0; c < op.in_dim(); ++c)
      out[c] += op.a[r][c] * y[r];
  return out;
}

/// Largest eigenvalue of the (symmetric PSD) Gram matrix A^T A by cyclic
/// Jacobi rotations.
inline double max_gram_eigenvalue(const DenseOp &op) {
  const std::size_t n = op.in_dim();
  std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < op.out_dim(); ++r)
    for (std::size_t i = 0; i < n; ++i) {
      if (op.a[r][i] == 0.0)
        continue;
      for (std::size_t j = 0; j < n; ++j)
        g[i][j] += op.a[r][i] * op.a[r][j];
    }

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q)
        off += g[p][q] * g[p][q];
    if (off < 1e-24)
      break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = g[p][q];
        if (std::abs(apq) < 1e-300)
          continue;
        const double tau = (g[q][q] - g[p][p]) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double gkp = g[k][p], gkq = g[k][q];
          g[k][p] = c * gkp - s * gkq;
          g[k][q] = s * gkp + c * gkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double gpk = g[p][k], gqk = g[q][k];
          g[p][k] = c * gpk - s * gqk;
          g[q][k] = s * gpk + c * gqk;
        }
      }
  }
  double max_eig = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    max_eig = std::max(max_eig, g[i][i]);
  return max_eig;
}

inline double soft(double x, double t) {
  const double mag = std::abs(x) - t;
  return mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
}

inline double dense_objective(const DenseOp &op, const std::vector<double> &x,
                              const std::vector<double> &z, double lambda) {
  const std::vector<double> az = apply(op, z);
  double fit = 0.0;
  for (std::size_t i = 0; i < az.size(); ++i) {
    const double r = az[i] - x[i];
    fit += r * r;
  }
  double l1 = 0.0;
  for (double v : z)
    l1 += std::abs(v);
  return 0.5 * fit + lambda * l1;
}

/// One proximal-gradient step on the dense route.
inline std::vector<double> dense_ista_step(const DenseOp &op,
                                           const std::vector<double> &z,
                                           const std::vector<double> &x,
                                           double gamma, double lambda) {
  std::vector<double> az = apply(op, z);
  for (std::size_t i = 0; i < az.size(); ++i)
    az[i] -= x[i];
  const std::vector<double> grad = apply_transpose(op, az);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    out[i] = soft(z[i] - gamma * grad[i], gamma * lambda);
  return out;
}

struct DenseSolveResult {
  std::vector<double> z;
  double objective = 0.0;
};

inline DenseSolveResult dense_ista(const DenseOp &op,
                                   const std::vector<double> &x, double gamma,
                                   double lambda, int iters) {
  std::vector<double> z(op.in_dim(), 0.0);
  for (int it = 0; it < iters; ++it)
    z = dense_ista_step(op, z, x, gamma, lambda);
  return {z, dense_objective(op, x, z, lambda)};
}

/// FISTA on the dense route (momentum oracle for solver tests).
inline DenseSolveResult dense_fista(const DenseOp &op,
                                    const std::vector<double> &x, double gamma,
                                    double lambda, int iters) {
  std::vector<double> z(op.in_dim(), 0.0), y = z, z_prev = z;
  double t = 1.0;
  for (int it = 0; it < iters; ++it) {
    z_prev = z;
    z = dense_ista_step(op, y, x, gamma, lambda);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      y[i] = z[i] + (t - 1.0) / t_next * (z[i] - z_prev[i]);
    t = t_next;
  }
  return {z, dense_objective(op, x, z, lambda)};
}

inline std::vector<double> vec(const ChannelStack &z) { return z.data; }
inline std::vector<double> vec(const Matrix2 &x) { return x.data; }

inline Matrix2 random_matrix(int r, int c, epiloc::Rng &rng, double lo = -1.0,
                             double hi = 1.0) {
  Matrix2 m(r, c);
  for (double &v : m.data)
    v = rng.uniform(lo, hi);
  return m;
}

inline ChannelStack random_stack(int m, int r, int c, epiloc::Rng &rng,
                                 double lo = -1.0, double hi = 1.0) {
  ChannelStack s(m, r, c);
  for (double &v : s.data)
    v = rng.uniform(lo, hi);
  return s;
}

} // namespace oracle
