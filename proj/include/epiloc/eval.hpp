#pragma once

#include <string>
#include <vector>

#include "epiloc/cista_net.hpp"
#include "epiloc/csc_ista.hpp"
#include "epiloc/types.hpp"

namespace epiloc {

struct DepthReadoutOptions {
  double peak_threshold = 0.5; // absolute threshold on the evidence values
  int min_separation = 3;      // grid steps
  int centroid_radius = 2;     // grid steps used for sub-grid refinement

  void validate() const;
};

struct DepthDetection {
  double depth_um = 0.0;  // centroid-refined depth
  double peak_value = 0.0;
  int peak_index = 0;
};

/// 1-D peak picking on an evidence vector: local maxima above the threshold,
/// greedy in descending value with min_separation suppression, each refined
/// by an intensity-weighted centroid over [peak-r, peak+r] (clipped) and
/// mapped through the affine depth grid. Sorted by descending peak value.
std::vector<DepthDetection> detect_depths(const std::vector<double> &evidence,
                                          const std::vector<double> &grid,
                                          const DepthReadoutOptions &opts);

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct RmseSummary {
  int matched = 0;
  int missed = 0;
  int spurious = 0;
  double rmse_x = 0.0;
  double rmse_y = 0.0;
  double rmse_z = 0.0;
  double sse_x = 0.0; // squared-error sums over matched pairs, for pooling
  double sse_y = 0.0;
  double sse_z = 0.0;
};

/// Greedy nearest-neighbor matching in z within gate_um; RMSE per axis over
/// matched pairs; unmatched truths count missed, unmatched predictions
/// spurious. Invariant under permutations of either input list.
RmseSummary match_and_rmse(const std::vector<Point3> &pred,
                           const std::vector<Point3> &truth, double gate_um);

/// Pool per-sample summaries into one (recomputes the RMSEs from the sums).
RmseSummary pool_summaries(const std::vector<RmseSummary> &parts);

struct BenchRow {
  std::string method;
  int n_epis = 0;
  double median_s = 0.0;
  double mad_s = 0.0;
  double speedup_vs_csc = 0.0;
};

/// Per-EPI wall-clock cost of csc-solve and cista-infer: median and median
/// absolute deviation over `repeats` passes after one warm-up, pinned to a
/// single thread. Model or dictionary load time is not measured.
std::vector<BenchRow> bench(const CistaNetParams &model,
                            const EpiDictionary &dict,
                            const std::vector<Matrix2> &epis, int repeats,
                            const SolverOptions &solver_opts,
                            int bias_sign = -1);

void write_bench_csv(const std::vector<BenchRow> &rows, const std::string &path);

/// Median / median-absolute-deviation of a sample (helper for bench).
double median(std::vector<double> values);
double median_abs_dev(const std::vector<double> &values, double med);

} // namespace epiloc
