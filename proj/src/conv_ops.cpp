#include "epiloc/conv_ops.hpp"

#include <algorithm>
#include <cmath>

#include "epiloc/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace epiloc {

namespace detail {

void check_kernel_dims(int xr, int xc, int kr, int kc) {
  if (kr < 1 || kc < 1 || kr % 2 == 0 || kc % 2 == 0)
    throw InvalidKernelError("kernel dimensions must be odd and >= 1");
  if (kr > xr || kc > xc)
    throw InvalidKernelError("kernel larger than input");
}

void check_kernel(const Matrix2 &x, const Matrix2 &k) {
  if (x.rows < 1 || x.cols < 1)
    throw DimensionError("signal must be non-empty");
  check_kernel_dims(x.rows, x.cols, k.rows, k.cols);
}

} // namespace detail

namespace {

// Core of every operator: accumulate corr(x, k) (or conv when `flip`) into
// `out` for output rows [row_begin, row_end). The inner loop is a contiguous
// saxpy over the valid column range, which the compiler vectorizes; the
// (a, b) order is fixed so results do not depend on how rows are distributed
// over threads.
inline void corr_rows_acc(const double *x, int xr, int xc, const double *k,
                          int kr, int kc, bool flip, double *out,
                          int row_begin, int row_end) {
  const int cr = kr / 2;
  const int cc = kc / 2;
  for (int i = row_begin; i < row_end; ++i) {
    double *out_row = out + static_cast<std::size_t>(i) * xc;
    for (int a = 0; a < kr; ++a) {
      const int xi = i + a - cr;
      if (xi < 0 || xi >= xr)
        continue;
      const double *x_row = x + static_cast<std::size_t>(xi) * xc;
      for (int b = 0; b < kc; ++b) {
        const double kv =
            flip ? k[static_cast<std::size_t>(kr - 1 - a) * kc + (kc - 1 - b)]
                 : k[static_cast<std::size_t>(a) * kc + b];
        const int shift = b - cc; // input column = j + shift
        const int jlo = std::max(0, -shift);
        const int jhi = std::min(xc, xc - shift);
        const double *src = x_row + shift;
        for (int j = jlo; j < jhi; ++j)
          out_row[j] += kv * src[j];
      }
    }
  }
}

inline void corr_full(const Matrix2 &x, const double *k, int kr, int kc,
                      bool flip, Matrix2 &out) {
  std::fill(out.data.begin(), out.data.end(), 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.rows; ++i)
    corr_rows_acc(x.data.data(), x.rows, x.cols, k, kr, kc, flip,
                  out.data.data(), i, i + 1);
}

void check_stack_pair(const ChannelStack &z, const ChannelStack &d) {
  if (z.channels != d.channels)
    throw DimensionError("channel-count mismatch between stack and filter bank");
  detail::check_kernel_dims(z.rows, z.cols, d.rows, d.cols);
}

void require_shape(const Matrix2 &m, int r, int c, const char *what) {
  if (m.rows != r || m.cols != c)
    throw DimensionError(std::string(what) + ": wrong output shape");
}

void require_shape(const ChannelStack &s, int m, int r, int c, const char *what) {
  if (s.channels != m || s.rows != r || s.cols != c)
    throw DimensionError(std::string(what) + ": wrong output shape");
}

} // namespace

void corr2_same_into(const Matrix2 &x, const Matrix2 &k, Matrix2 &out) {
  detail::check_kernel(x, k);
  require_shape(out, x.rows, x.cols, "corr2_same");
  corr_full(x, k.data.data(), k.rows, k.cols, /*flip=*/false, out);
}

Matrix2 corr2_same(const Matrix2 &x, const Matrix2 &k) {
  detail::check_kernel(x, k);
  Matrix2 out(x.rows, x.cols);
  corr_full(x, k.data.data(), k.rows, k.cols, /*flip=*/false, out);
  return out;
}

void conv2_same_into(const Matrix2 &x, const Matrix2 &k, Matrix2 &out) {
  detail::check_kernel(x, k);
  require_shape(out, x.rows, x.cols, "conv2_same");
  corr_full(x, k.data.data(), k.rows, k.cols, /*flip=*/true, out);
}

Matrix2 conv2_same(const Matrix2 &x, const Matrix2 &k) {
  detail::check_kernel(x, k);
  Matrix2 out(x.rows, x.cols);
  corr_full(x, k.data.data(), k.rows, k.cols, /*flip=*/true, out);
  return out;
}

void dict_forward_into(const ChannelStack &z, const ChannelStack &d, Matrix2 &out) {
  check_stack_pair(z, d);
  require_shape(out, z.rows, z.cols, "dict_forward");
  std::fill(out.data.begin(), out.data.end(), 0.0);
  // Rows are distributed over threads; each output row sums its channels in
  // fixed m order, so the result is thread-count independent.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < z.rows; ++i)
    for (int m = 0; m < z.channels; ++m)
      corr_rows_acc(z.channel(m), z.rows, z.cols, d.channel(m), d.rows, d.cols,
                    /*flip=*/true, out.data.data(), i, i + 1);
}

Matrix2 dict_forward(const ChannelStack &z, const ChannelStack &d) {
  check_stack_pair(z, d);
  Matrix2 out(z.rows, z.cols);
  dict_forward_into(z, d, out);
  return out;
}

void dict_adjoint_into(const Matrix2 &y, const ChannelStack &d, ChannelStack &out) {
  detail::check_kernel_dims(y.rows, y.cols, d.rows, d.cols);
  require_shape(out, d.channels, y.rows, y.cols, "dict_adjoint");
  std::fill(out.data.begin(), out.data.end(), 0.0);
#pragma omp parallel for schedule(static)
  for (int m = 0; m < d.channels; ++m)
    corr_rows_acc(y.data.data(), y.rows, y.cols, d.channel(m), d.rows, d.cols,
                  /*flip=*/false, out.channel(m), 0, y.rows);
}

ChannelStack dict_adjoint(const Matrix2 &y, const ChannelStack &d) {
  detail::check_kernel_dims(y.rows, y.cols, d.rows, d.cols);
  ChannelStack out(d.channels, y.rows, y.cols);
  dict_adjoint_into(y, d, out);
  return out;
}

void depthwise_corr_into(const ChannelStack &z, const ChannelStack &s, ChannelStack &out) {
  check_stack_pair(z, s);
  require_shape(out, z.channels, z.rows, z.cols, "depthwise_corr");
  std::fill(out.data.begin(), out.data.end(), 0.0);
#pragma omp parallel for schedule(static)
  for (int m = 0; m < z.channels; ++m)
    corr_rows_acc(z.channel(m), z.rows, z.cols, s.channel(m), s.rows, s.cols,
                  /*flip=*/false, out.channel(m), 0, z.rows);
}

ChannelStack depthwise_corr(const ChannelStack &z, const ChannelStack &s) {
  check_stack_pair(z, s);
  ChannelStack out(z.channels, z.rows, z.cols);
  depthwise_corr_into(z, s, out);
  return out;
}

void depthwise_conv_into(const ChannelStack &z, const ChannelStack &s, ChannelStack &out) {
  check_stack_pair(z, s);
  require_shape(out, z.channels, z.rows, z.cols, "depthwise_conv");
  std::fill(out.data.begin(), out.data.end(), 0.0);
#pragma omp parallel for schedule(static)
  for (int m = 0; m < z.channels; ++m)
    corr_rows_acc(z.channel(m), z.rows, z.cols, s.channel(m), s.rows, s.cols,
                  /*flip=*/true, out.channel(m), 0, z.rows);
}

ChannelStack depthwise_conv(const ChannelStack &z, const ChannelStack &s) {
  check_stack_pair(z, s);
  ChannelStack out(z.channels, z.rows, z.cols);
  depthwise_conv_into(z, s, out);
  return out;
}

void perchannel_corr_into(const Matrix2 &x, const ChannelStack &w, ChannelStack &out) {
  detail::check_kernel_dims(x.rows, x.cols, w.rows, w.cols);
  require_shape(out, w.channels, x.rows, x.cols, "perchannel_corr");
  std::fill(out.data.begin(), out.data.end(), 0.0);
#pragma omp parallel for schedule(static)
  for (int m = 0; m < w.channels; ++m)
    corr_rows_acc(x.data.data(), x.rows, x.cols, w.channel(m), w.rows, w.cols,
                  /*flip=*/false, out.channel(m), 0, x.rows);
}

ChannelStack perchannel_corr(const Matrix2 &x, const ChannelStack &w) {
  detail::check_kernel_dims(x.rows, x.cols, w.rows, w.cols);
  ChannelStack out(w.channels, x.rows, x.cols);
  perchannel_corr_into(x, w, out);
  return out;
}

namespace detail {

void kernel_grad_raw(const double *x, const double *g, int rows, int cols,
                     double *out, int kr, int kc) {
  const int cr = kr / 2, cc = kc / 2;
  for (int a = 0; a < kr; ++a) {
    for (int b = 0; b < kc; ++b) {
      const int shift = b - cc;
      double acc = 0.0;
      for (int i = 0; i < rows; ++i) {
        const int xi = i + a - cr;
        if (xi < 0 || xi >= rows)
          continue;
        const double *g_row = g + static_cast<std::size_t>(i) * cols;
        const double *x_row = x + static_cast<std::size_t>(xi) * cols + shift;
        const int jlo = std::max(0, -shift);
        const int jhi = std::min(cols, cols - shift);
        double dot = 0.0;
        for (int j = jlo; j < jhi; ++j)
          dot += g_row[j] * x_row[j];
        acc += dot;
      }
      out[static_cast<std::size_t>(a) * kc + b] = acc;
    }
  }
}

} // namespace detail

void kernel_grad_corr_into(const Matrix2 &x, const Matrix2 &g, Matrix2 &out) {
  if (!same_shape(x, g))
    throw DimensionError("kernel_grad_corr: signal and cotangent shapes differ");
  detail::check_kernel_dims(x.rows, x.cols, out.rows, out.cols);
  detail::kernel_grad_raw(x.data.data(), g.data.data(), x.rows, x.cols,
                          out.data.data(), out.rows, out.cols);
}

Matrix2 kernel_grad_corr(const Matrix2 &x, const Matrix2 &g, int k_rows, int k_cols) {
  Matrix2 out(k_rows, k_cols);
  kernel_grad_corr_into(x, g, out);
  return out;
}

double soft_threshold(double x, double t) {
  if (t < 0.0)
    throw InvalidThresholdError("soft_threshold: threshold must be >= 0");
  const double mag = std::abs(x) - t;
  return mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
}

MaxPoolResult global_max_pool(const ChannelStack &z) {
  MaxPoolResult res;
  res.values.assign(z.channels, 0.0);
  res.arg_positions.assign(z.channels, {0, 0});
#pragma omp parallel for schedule(static)
  for (int m = 0; m < z.channels; ++m) {
    const double *ch = z.channel(m);
    double best = ch[0];
    std::size_t best_idx = 0;
    const std::size_t n = z.channel_size();
    for (std::size_t idx = 1; idx < n; ++idx) {
      if (ch[idx] > best) { // strict: first row-major occurrence wins ties
        best = ch[idx];
        best_idx = idx;
      }
    }
    res.values[m] = best;
    res.arg_positions[m] = {static_cast<int>(best_idx / z.cols),
                            static_cast<int>(best_idx % z.cols)};
  }
  return res;
}

LipschitzEstimate estimate_lipschitz(const ChannelStack &d, int rows, int cols,
                                     double tol, int max_iters,
                                     std::uint64_t seed) {
  if (tol <= 0.0)
    throw ConfigError("estimate_lipschitz: tol must be > 0");
  if (max_iters < 1)
    throw ConfigError("estimate_lipschitz: max_iters must be >= 1");
  detail::check_kernel_dims(rows, cols, d.rows, d.cols);

  LipschitzEstimate est;
  Rng rng(splitmix64(seed));
  ChannelStack z(d.channels, rows, cols);
  for (double &v : z.data)
    v = rng.uniform(-1.0, 1.0);

  Matrix2 y(rows, cols);
  ChannelStack w(d.channels, rows, cols);
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    // Normalize current iterate.
    double nz = 0.0;
    for (double v : z.data)
      nz += v * v;
    nz = std::sqrt(nz);
    if (nz == 0.0) {
      est.degenerate = true;
      est.iterations = it;
      return est;
    }
    const double inv = 1.0 / nz;
    for (double &v : z.data)
      v *= inv;

    dict_forward_into(z, d, y);
    dict_adjoint_into(y, d, w);

    double rayleigh = 0.0; // <z, Gram z> with ||z|| = 1
    for (std::size_t i = 0; i < z.data.size(); ++i)
      rayleigh += z.data[i] * w.data[i];

    est.value = rayleigh;
    est.iterations = it;
    if (rayleigh == 0.0) {
      est.degenerate = true;
      return est;
    }
    if (it > 1 && std::abs(rayleigh - prev) <= tol * std::abs(rayleigh)) {
      est.converged = true;
      return est;
    }
    prev = rayleigh;
    z.data.swap(w.data);
  }
  return est;
}

} // namespace epiloc
