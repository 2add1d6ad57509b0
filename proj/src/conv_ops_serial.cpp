#include "epiloc/conv_ops.hpp"

// Naive single-threaded kernels, written straight from the definitions with
// per-element bounds checks. These stay deliberately simple so they can act
// as the reference the optimized OpenMP kernels are tested and benchmarked
// against.

namespace epiloc::serial {

Matrix2 corr2_same(const Matrix2 &x, const Matrix2 &k) {
  detail::check_kernel(x, k);
  const int cr = k.rows / 2, cc = k.cols / 2;
  Matrix2 out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) {
      double s = 0.0;
      for (int a = 0; a < k.rows; ++a)
        for (int b = 0; b < k.cols; ++b) {
          const int xi = i + a - cr;
          const int xj = j + b - cc;
          if (xi >= 0 && xi < x.rows && xj >= 0 && xj < x.cols)
            s += x(xi, xj) * k(a, b);
        }
      out(i, j) = s;
    }
  return out;
}

namespace {
Matrix2 flip180(const Matrix2 &k) {
  Matrix2 f(k.rows, k.cols);
  for (int a = 0; a < k.rows; ++a)
    for (int b = 0; b < k.cols; ++b)
      f(a, b) = k(k.rows - 1 - a, k.cols - 1 - b);
  return f;
}
} // namespace

Matrix2 conv2_same(const Matrix2 &x, const Matrix2 &k) {
  detail::check_kernel(x, k);
  return serial::corr2_same(x, flip180(k));
}

Matrix2 dict_forward(const ChannelStack &z, const ChannelStack &d) {
  if (z.channels != d.channels)
    throw DimensionError("channel-count mismatch between stack and filter bank");
  Matrix2 out(z.rows, z.cols);
  for (int m = 0; m < z.channels; ++m) {
    const Matrix2 part = serial::conv2_same(z.channel_matrix(m), d.channel_matrix(m));
    for (std::size_t idx = 0; idx < out.size(); ++idx)
      out.data[idx] += part.data[idx];
  }
  return out;
}

ChannelStack dict_adjoint(const Matrix2 &y, const ChannelStack &d) {
  ChannelStack out(d.channels, y.rows, y.cols);
  for (int m = 0; m < d.channels; ++m) {
    const Matrix2 ch = serial::corr2_same(y, d.channel_matrix(m));
    std::copy(ch.data.begin(), ch.data.end(), out.channel(m));
  }
  return out;
}

ChannelStack depthwise_corr(const ChannelStack &z, const ChannelStack &s) {
  if (z.channels != s.channels)
    throw DimensionError("channel-count mismatch between stack and filter bank");
  ChannelStack out(z.channels, z.rows, z.cols);
  for (int m = 0; m < z.channels; ++m) {
    const Matrix2 ch = serial::corr2_same(z.channel_matrix(m), s.channel_matrix(m));
    std::copy(ch.data.begin(), ch.data.end(), out.channel(m));
  }
  return out;
}

} // namespace epiloc::serial
