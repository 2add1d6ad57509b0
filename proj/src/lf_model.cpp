#include "epiloc/lf_model.hpp"

#include <algorithm>
#include <cmath>

namespace epiloc {

Matrix2 central_view(const LightField4D &lf) {
  if (lf.theta_u % 2 == 0 || lf.theta_v % 2 == 0)
    throw RangeError("central_view: angular dimensions must be odd");
  const int uc = (lf.theta_u - 1) / 2;
  const int vc = (lf.theta_v - 1) / 2;
  Matrix2 out(lf.n_x, lf.n_y);
  for (int x = 0; x < lf.n_x; ++x)
    for (int y = 0; y < lf.n_y; ++y)
      out(x, y) = lf.at(uc, vc, x, y);
  return out;
}

Matrix2 extract_epi(const LightField4D &lf, int y_row, int v) {
  if (y_row < 0 || y_row >= lf.n_y || v < 0 || v >= lf.theta_v)
    throw RangeError("extract_epi: slice indices out of range");
  Matrix2 out(lf.theta_u, lf.n_x);
  for (int u = 0; u < lf.theta_u; ++u)
    for (int x = 0; x < lf.n_x; ++x)
      out(u, x) = lf.at(u, v, x, y_row);
  return out;
}

void embed_epi(LightField4D &lf, const Matrix2 &epi, int y_row, int v) {
  if (y_row < 0 || y_row >= lf.n_y || v < 0 || v >= lf.theta_v)
    throw RangeError("embed_epi: slice indices out of range");
  if (epi.rows != lf.theta_u || epi.cols != lf.n_x)
    throw DimensionError("embed_epi: EPI shape does not match the light field");
  for (int u = 0; u < lf.theta_u; ++u)
    for (int x = 0; x < lf.n_x; ++x)
      lf.at(u, v, x, y_row) = epi(u, x);
}

std::vector<LateralDetection> detect_lateral(const Matrix2 &view,
                                             double threshold,
                                             int min_separation) {
  if (threshold < 0.0)
    throw InvalidThresholdError("detect_lateral: threshold must be >= 0");
  if (min_separation < 1)
    throw ConfigError("detect_lateral: min_separation must be >= 1");

  std::vector<LateralDetection> candidates;
  for (int i = 0; i < view.rows; ++i)
    for (int j = 0; j < view.cols; ++j) {
      const double v = view(i, j);
      if (v <= threshold)
        continue;
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0)
            continue;
          const int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= view.rows || nj < 0 || nj >= view.cols)
            continue;
          if (view(ni, nj) > v) {
            is_max = false;
            break;
          }
        }
      if (is_max)
        candidates.push_back({i, j, v});
    }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const LateralDetection &a, const LateralDetection &b) {
                     if (a.intensity != b.intensity)
                       return a.intensity > b.intensity;
                     if (a.x != b.x)
                       return a.x < b.x;
                     return a.y < b.y;
                   });

  std::vector<LateralDetection> accepted;
  for (const auto &c : candidates) {
    bool suppressed = false;
    for (const auto &acc : accepted) {
      const int cheb = std::max(std::abs(c.x - acc.x), std::abs(c.y - acc.y));
      if (cheb < min_separation) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed)
      accepted.push_back(c);
  }
  return accepted;
}

} // namespace epiloc
