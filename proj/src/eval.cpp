#include "epiloc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "epiloc/binio.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace epiloc {

void DepthReadoutOptions::validate() const {
  if (!std::isfinite(peak_threshold))
    throw ConfigError("readout: peak_threshold must be finite");
  if (min_separation < 1)
    throw ConfigError("readout: min_separation must be >= 1");
  if (centroid_radius < 0)
    throw ConfigError("readout: centroid_radius must be >= 0");
}

std::vector<DepthDetection> detect_depths(const std::vector<double> &evidence,
                                          const std::vector<double> &grid,
                                          const DepthReadoutOptions &opts) {
  opts.validate();
  if (evidence.size() != grid.size())
    throw DimensionError("detect_depths: evidence/grid length mismatch");
  const int m = static_cast<int>(evidence.size());

  struct Candidate {
    int index;
    double value;
  };
  std::vector<Candidate> candidates;
  for (int i = 0; i < m; ++i) {
    const double v = evidence[i];
    if (!(v > opts.peak_threshold))
      continue;
    if (i > 0 && evidence[i - 1] > v)
      continue;
    if (i + 1 < m && evidence[i + 1] > v)
      continue;
    candidates.push_back({i, v});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate &a, const Candidate &b) {
                     if (a.value != b.value)
                       return a.value > b.value;
                     return a.index < b.index;
                   });

  std::vector<DepthDetection> out;
  std::vector<int> accepted;
  for (const Candidate &c : candidates) {
    bool suppressed = false;
    for (int a : accepted)
      if (std::abs(c.index - a) < opts.min_separation) {
        suppressed = true;
        break;
      }
    if (suppressed)
      continue;
    accepted.push_back(c.index);

    const int lo = std::max(0, c.index - opts.centroid_radius);
    const int hi = std::min(m - 1, c.index + opts.centroid_radius);
    double wsum = 0.0, isum = 0.0;
    for (int i = lo; i <= hi; ++i) {
      wsum += evidence[i];
      isum += evidence[i] * i;
    }
    const double refined = wsum > 0.0 ? isum / wsum : c.index;
    const double step = m > 1 ? grid[1] - grid[0] : 0.0;
    out.push_back({grid[0] + refined * step, c.value, c.index});
  }
  return out;
}

RmseSummary match_and_rmse(const std::vector<Point3> &pred,
                           const std::vector<Point3> &truth, double gate_um) {
  if (!(gate_um > 0.0))
    throw ConfigError("match_and_rmse: gate must be > 0");

  struct Pair {
    double dist;
    int p, t;
  };
  std::vector<Pair> pairs;
  for (int p = 0; p < static_cast<int>(pred.size()); ++p)
    for (int t = 0; t < static_cast<int>(truth.size()); ++t) {
      const double d = std::abs(pred[p].z - truth[t].z);
      if (d <= gate_um)
        pairs.push_back({d, p, t});
    }
  // Tie-break on coordinate values (not list positions) so the matching is
  // invariant under permutations of the inputs.
  std::sort(pairs.begin(), pairs.end(), [&](const Pair &a, const Pair &b) {
    if (a.dist != b.dist)
      return a.dist < b.dist;
    if (pred[a.p].z != pred[b.p].z)
      return pred[a.p].z < pred[b.p].z;
    if (truth[a.t].z != truth[b.t].z)
      return truth[a.t].z < truth[b.t].z;
    if (pred[a.p].x != pred[b.p].x)
      return pred[a.p].x < pred[b.p].x;
    return truth[a.t].x < truth[b.t].x;
  });

  std::vector<char> p_used(pred.size(), 0), t_used(truth.size(), 0);
  RmseSummary s;
  for (const Pair &pr : pairs) {
    if (p_used[pr.p] || t_used[pr.t])
      continue;
    p_used[pr.p] = t_used[pr.t] = 1;
    ++s.matched;
    const double dx = pred[pr.p].x - truth[pr.t].x;
    const double dy = pred[pr.p].y - truth[pr.t].y;
    const double dz = pred[pr.p].z - truth[pr.t].z;
    s.sse_x += dx * dx;
    s.sse_y += dy * dy;
    s.sse_z += dz * dz;
  }
  for (char u : p_used)
    if (!u)
      ++s.spurious;
  for (char u : t_used)
    if (!u)
      ++s.missed;
  if (s.matched > 0) {
    s.rmse_x = std::sqrt(s.sse_x / s.matched);
    s.rmse_y = std::sqrt(s.sse_y / s.matched);
    s.rmse_z = std::sqrt(s.sse_z / s.matched);
  }
  return s;
}

RmseSummary pool_summaries(const std::vector<RmseSummary> &parts) {
  RmseSummary s;
  for (const RmseSummary &p : parts) {
    s.matched += p.matched;
    s.missed += p.missed;
    s.spurious += p.spurious;
    s.sse_x += p.sse_x;
    s.sse_y += p.sse_y;
    s.sse_z += p.sse_z;
  }
  if (s.matched > 0) {
    s.rmse_x = std::sqrt(s.sse_x / s.matched);
    s.rmse_y = std::sqrt(s.sse_y / s.matched);
    s.rmse_z = std::sqrt(s.sse_z / s.matched);
  }
  return s;
}

double median(std::vector<double> values) {
  if (values.empty())
    throw ConfigError("median: empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_abs_dev(const std::vector<double> &values, double med) {
  std::vector<double> dev(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    dev[i] = std::abs(values[i] - med);
  return median(std::move(dev));
}

namespace {

struct SingleThreadGuard {
  int saved = 0;
  SingleThreadGuard() {
#ifdef _OPENMP
    saved = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
  }
  ~SingleThreadGuard() {
#ifdef _OPENMP
    omp_set_num_threads(saved);
#endif
  }
};

} // namespace

std::vector<BenchRow> bench(const CistaNetParams &model,
                            const EpiDictionary &dict,
                            const std::vector<Matrix2> &epis, int repeats,
                            const SolverOptions &solver_opts, int bias_sign) {
  if (repeats < 3)
    throw ConfigError("bench: repeats must be >= 3");
  if (epis.empty())
    throw ConfigError("bench: need at least one EPI");

  SingleThreadGuard pin; // per-method fairness: same single thread for both
  using clock = std::chrono::steady_clock;
  const int n = static_cast<int>(epis.size());

  auto time_passes = [&](auto &&body) {
    body(); // warm-up
    std::vector<double> per_epi;
    per_epi.reserve(repeats);
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = clock::now();
      body();
      const auto t1 = clock::now();
      per_epi.push_back(std::chrono::duration<double>(t1 - t0).count() / n);
    }
    return per_epi;
  };

  const std::vector<double> csc_times = time_passes([&]() {
    for (const Matrix2 &epi : epis)
      solve(epi, dict, solver_opts);
  });
  const std::vector<double> net_times = time_passes([&]() {
    for (const Matrix2 &epi : epis)
      infer(epi, model, bias_sign);
  });

  const double csc_med = median(csc_times);
  const double net_med = median(net_times);
  std::vector<BenchRow> rows;
  rows.push_back({"csc-solve", n, csc_med, median_abs_dev(csc_times, csc_med), 1.0});
  rows.push_back({"cista-infer", n, net_med, median_abs_dev(net_times, net_med),
                  net_med > 0.0 ? csc_med / net_med : 0.0});
  return rows;
}

void write_bench_csv(const std::vector<BenchRow> &rows, const std::string &path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os)
    throw IoError("bench: cannot write '" + path + "'");
  os << "method,n_epis,median_s,mad_s,speedup_vs_csc\n";
  for (const BenchRow &r : rows)
    os << r.method << ',' << r.n_epis << ',' << binio::format_double(r.median_s)
       << ',' << binio::format_double(r.mad_s) << ','
       << binio::format_double(r.speedup_vs_csc) << '\n';
}

} // namespace epiloc
