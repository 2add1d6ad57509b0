#pragma once

#include <vector>

#include "epiloc/types.hpp"

namespace epiloc {

/// 4D light field indexed [u, v, x, y]: two angular dimensions (odd, so a
/// central view exists) and two spatial dimensions.
struct LightField4D {
  int theta_u = 0;
  int theta_v = 0;
  int n_x = 0;
  int n_y = 0;
  std::vector<double> data;

  LightField4D() = default;
  LightField4D(int tu, int tv, int nx, int ny, double fill = 0.0)
      : theta_u(tu), theta_v(tv), n_x(nx), n_y(ny),
        data(static_cast<std::size_t>(tu) * tv * nx * ny, fill) {
    if (tu < 1 || tv < 1 || nx < 1 || ny < 1)
      throw DimensionError("LightField4D: dimensions must be >= 1");
  }

  std::size_t index(int u, int v, int x, int y) const {
    return ((static_cast<std::size_t>(u) * theta_v + v) * n_x + x) * n_y + y;
  }
  double &at(int u, int v, int x, int y) { return data[index(u, v, x, y)]; }
  double at(int u, int v, int x, int y) const { return data[index(u, v, x, y)]; }
};

struct LateralDetection {
  int x = 0;
  int y = 0;
  double intensity = 0.0;
};

/// The n_x by n_y slice at the central (u, v); requires odd angular dims.
Matrix2 central_view(const LightField4D &lf);

/// EPI slice out[u, x] = lf[u, v, x, y_row].
Matrix2 extract_epi(const LightField4D &lf, int y_row, int v);

/// Writes epi back into the (y_row, v) slice; inverse of extract_epi.
void embed_epi(LightField4D &lf, const Matrix2 &epi, int y_row, int v);

/// 8-neighborhood local maxima brighter than `threshold`, greedily accepted
/// in descending intensity order; candidates within Chebyshev distance
/// < min_separation of an accepted detection are suppressed.
std::vector<LateralDetection> detect_lateral(const Matrix2 &view,
                                             double threshold,
                                             int min_separation);

} // namespace epiloc
