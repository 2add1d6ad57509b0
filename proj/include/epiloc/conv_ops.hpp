#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "epiloc/types.hpp"

namespace epiloc {

// 2D correlation/convolution primitives with "same"-shape zero padding,
// their exact adjoints, and the channel-summed dictionary operators built
// on them. Kernels must have odd dimensions no larger than the signal.
//
// The default entry points parallelize with OpenMP over rows or channels;
// every output element is produced by exactly one thread with a fixed inner
// summation order, so results are bitwise independent of the thread count.
// epiloc::serial holds a naive reference implementation kept for testing.

/// out[i,j] = sum_{a,b} x[i+a-kr/2, j+b-kc/2] * k[a,b], zero outside x.
Matrix2 corr2_same(const Matrix2 &x, const Matrix2 &k);

/// Convolution: corr2_same with the kernel flipped along both axes.
Matrix2 conv2_same(const Matrix2 &x, const Matrix2 &k);

/// sum_m conv2_same(z_m, d_m); linear in z.
Matrix2 dict_forward(const ChannelStack &z, const ChannelStack &d);

/// Channel m = corr2_same(y, d_m); exact adjoint of dict_forward.
ChannelStack dict_adjoint(const Matrix2 &y, const ChannelStack &d);

/// Channel m = corr2_same(z_m, s_m); channels never mix.
ChannelStack depthwise_corr(const ChannelStack &z, const ChannelStack &s);

/// Channel m = conv2_same(z_m, s_m); the exact adjoint of depthwise_corr in
/// the signal argument (backpropagation through depthwise stages).
ChannelStack depthwise_conv(const ChannelStack &z, const ChannelStack &s);

/// Channel m = corr2_same(x, w_m): one input matrix pushed through a filter
/// bank (the per-layer input injection of the unrolled network).
ChannelStack perchannel_corr(const Matrix2 &x, const ChannelStack &w);

// Overwrite variants for allocation-free inner loops. Output must already
// have the right shape.
void corr2_same_into(const Matrix2 &x, const Matrix2 &k, Matrix2 &out);
void conv2_same_into(const Matrix2 &x, const Matrix2 &k, Matrix2 &out);
void dict_forward_into(const ChannelStack &z, const ChannelStack &d, Matrix2 &out);
void dict_adjoint_into(const Matrix2 &y, const ChannelStack &d, ChannelStack &out);
void depthwise_corr_into(const ChannelStack &z, const ChannelStack &s, ChannelStack &out);
void depthwise_conv_into(const ChannelStack &z, const ChannelStack &s, ChannelStack &out);
void perchannel_corr_into(const Matrix2 &x, const ChannelStack &w, ChannelStack &out);

/// Gradient of <g, corr2_same(x, k)> with respect to the kernel:
/// out[a,b] = sum_{i,j} g[i,j] * x[i+a-kr/2, j+b-kc/2].
Matrix2 kernel_grad_corr(const Matrix2 &x, const Matrix2 &g, int k_rows, int k_cols);
void kernel_grad_corr_into(const Matrix2 &x, const Matrix2 &g, Matrix2 &out);

/// sign(x) * max(|x| - t, 0). Throws InvalidThresholdError for t < 0.
double soft_threshold(double x, double t);

struct MaxPoolResult {
  std::vector<double> values;                     // per-channel maximum
  std::vector<std::pair<int, int>> arg_positions; // first row-major argmax
};

/// Per-channel global maximum with its first row-major position (the
/// tie-break is binding: training routes the pooled gradient there).
MaxPoolResult global_max_pool(const ChannelStack &z);

struct LipschitzEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false; // zero dictionary: operator norm is 0
};

/// Largest eigenvalue of z -> dict_adjoint(dict_forward(z, d), d) by power
/// iteration on a seeded random start, stopping when the relative Rayleigh
/// quotient change drops below tol.
LipschitzEstimate estimate_lipschitz(const ChannelStack &d, int rows, int cols,
                                     double tol, int max_iters,
                                     std::uint64_t seed);

namespace serial {

// Literal quadruple-loop reference implementations, kept as the comparison
// baseline for the parallel kernels and for benchmarks.
Matrix2 corr2_same(const Matrix2 &x, const Matrix2 &k);
Matrix2 conv2_same(const Matrix2 &x, const Matrix2 &k);
Matrix2 dict_forward(const ChannelStack &z, const ChannelStack &d);
ChannelStack dict_adjoint(const Matrix2 &y, const ChannelStack &d);
ChannelStack depthwise_corr(const ChannelStack &z, const ChannelStack &s);

} // namespace serial

namespace detail {
/// Shared precondition checks (odd kernel dims, kernel fits the signal).
void check_kernel(const Matrix2 &x, const Matrix2 &k);
void check_kernel_dims(int xr, int xc, int kr, int kc);
/// Raw-pointer kernel gradient used by the network backward pass to work on
/// channel slices without copies. No validation.
void kernel_grad_raw(const double *x, const double *g, int rows, int cols,
                     double *out, int kr, int kc);
} // namespace detail

} // namespace epiloc
