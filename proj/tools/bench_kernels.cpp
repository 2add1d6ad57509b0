// Micro-benchmark comparing the OpenMP kernels against the serial reference
// implementation on dictionary-scale workloads. Prints one row per kernel
// with the serial/parallel timings and the speedup.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "epiloc/conv_ops.hpp"
#include "epiloc/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace epiloc;

namespace {

using clock_type = std::chrono::steady_clock;

template <typename Fn> double time_best_of(int reps, Fn &&fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    fn();
    const auto t1 = clock_type::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void report(const std::string &name, double serial_s, double parallel_s) {
  std::printf("%-16s serial %10.6f s   parallel %10.6f s   speedup %5.2fx\n",
              name.c_str(), serial_s, parallel_s, serial_s / parallel_s);
}

} // namespace

int main(int argc, char **argv) {
  int m = 55, rows = 19, cols = 63, atom_r = 19, atom_c = 31, reps = 5;
  if (argc > 1)
    m = std::atoi(argv[1]);
  if (argc > 2)
    reps = std::atoi(argv[2]);

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  std::printf("stack: %d x %d x %d, atoms %d x %d, best of %d\n\n", m, rows,
              cols, atom_r, atom_c, reps);

  Rng rng(12345);
  ChannelStack d(m, atom_r, atom_c);
  for (double &v : d.data)
    v = rng.uniform(-1, 1);
  ChannelStack z(m, rows, cols);
  for (double &v : z.data)
    v = rng.uniform(-1, 1);
  Matrix2 y(rows, cols);
  for (double &v : y.data)
    v = rng.uniform(-1, 1);
  ChannelStack s(m, 9, 9);
  for (double &v : s.data)
    v = rng.uniform(-1, 1);

  volatile double sink = 0.0;

  const double fwd_ser =
      time_best_of(reps, [&] { sink = sink + serial::dict_forward(z, d).data[0]; });
  const double fwd_par =
      time_best_of(reps, [&] { sink = sink + dict_forward(z, d).data[0]; });
  report("dict_forward", fwd_ser, fwd_par);

  const double adj_ser =
      time_best_of(reps, [&] { sink = sink + serial::dict_adjoint(y, d).data[0]; });
  const double adj_par =
      time_best_of(reps, [&] { sink = sink + dict_adjoint(y, d).data[0]; });
  report("dict_adjoint", adj_ser, adj_par);

  const double dw_ser =
      time_best_of(reps, [&] { sink = sink + serial::depthwise_corr(z, s).data[0]; });
  const double dw_par =
      time_best_of(reps, [&] { sink = sink + depthwise_corr(z, s).data[0]; });
  report("depthwise_corr", dw_ser, dw_par);

  const double corr_ser =
      time_best_of(reps, [&] { sink = sink + serial::corr2_same(y, s.channel_matrix(0)).data[0]; });
  const double corr_par =
      time_best_of(reps, [&] { sink = sink + corr2_same(y, s.channel_matrix(0)).data[0]; });
  report("corr2_same", corr_ser, corr_par);

  (void)sink;
  return 0;
}
