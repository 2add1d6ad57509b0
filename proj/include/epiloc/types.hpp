#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "epiloc/errors.hpp"

namespace epiloc {

/// Dense row-major 2D matrix of doubles. Rows index the angular dimension,
/// columns the spatial dimension when the matrix holds an EPI.
struct Matrix2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix2() = default;
  Matrix2(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
    if (r < 1 || c < 1)
      throw DimensionError("Matrix2: dimensions must be >= 1");
  }

  double &operator()(int i, int j) {
    return data[static_cast<std::size_t>(i) * cols + j];
  }
  double operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols + j];
  }
  double *row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const double *row(int i) const {
    return data.data() + static_cast<std::size_t>(i) * cols;
  }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

inline bool same_shape(const Matrix2 &a, const Matrix2 &b) {
  return a.rows == b.rows && a.cols == b.cols;
}

/// M channels of identically shaped matrices stored contiguously,
/// channel-major. Holds sparse-code stacks, filter banks and dictionaries.
struct ChannelStack {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  ChannelStack() = default;
  ChannelStack(int m, int r, int c, double fill = 0.0)
      : channels(m), rows(r), cols(c),
        data(static_cast<std::size_t>(m) * r * c, fill) {
    if (m < 1 || r < 1 || c < 1)
      throw DimensionError("ChannelStack: dimensions must be >= 1");
  }

  std::size_t channel_size() const {
    return static_cast<std::size_t>(rows) * cols;
  }
  double *channel(int m) { return data.data() + m * channel_size(); }
  const double *channel(int m) const {
    return data.data() + m * channel_size();
  }
  double &at(int m, int i, int j) {
    return data[m * channel_size() + static_cast<std::size_t>(i) * cols + j];
  }
  double at(int m, int i, int j) const {
    return data[m * channel_size() + static_cast<std::size_t>(i) * cols + j];
  }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  /// Copy of channel m as a standalone matrix.
  Matrix2 channel_matrix(int m) const {
    Matrix2 out(rows, cols);
    const double *src = channel(m);
    std::copy(src, src + channel_size(), out.data.begin());
    return out;
  }
};

inline bool same_shape(const ChannelStack &a, const ChannelStack &b) {
  return a.channels == b.channels && a.rows == b.rows && a.cols == b.cols;
}

/// EPI dictionary: M atoms plus the depth (micrometer) each atom encodes.
struct EpiDictionary {
  ChannelStack atoms;           // M x atom_theta x atom_n
  std::vector<double> depth_um; // length M
};

} // namespace epiloc
