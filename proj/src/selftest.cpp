#include "epiloc/selftest.hpp"

#include <cmath>
#include <sstream>

#include "epiloc/cista_net.hpp"
#include "epiloc/conv_ops.hpp"
#include "epiloc/csc_ista.hpp"
#include "epiloc/rng.hpp"
#include "epiloc/synth_data.hpp"

namespace epiloc {

namespace {

ChannelStack random_stack(int m, int r, int c, Rng &rng, double lo, double hi) {
  ChannelStack s(m, r, c);
  for (double &v : s.data)
    v = rng.uniform(lo, hi);
  return s;
}

Matrix2 random_matrix(int r, int c, Rng &rng, double lo, double hi) {
  Matrix2 x(r, c);
  for (double &v : x.data)
    v = rng.uniform(lo, hi);
  return x;
}

SelftestResult adjoint_suite(std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0xAD101ull));
  double worst = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const int m = 1 + static_cast<int>(rng.uniform_int(0, 4));
    const int rows = 5 + static_cast<int>(rng.uniform_int(0, 6));
    const int cols = 5 + static_cast<int>(rng.uniform_int(0, 10));
    const int kr = 1 + 2 * static_cast<int>(rng.uniform_int(0, 2));
    const int kc = 1 + 2 * static_cast<int>(rng.uniform_int(0, 2));
    ChannelStack d = random_stack(m, kr, kc, rng, -1.0, 1.0);
    ChannelStack z = random_stack(m, rows, cols, rng, -1.0, 1.0);
    Matrix2 y = random_matrix(rows, cols, rng, -1.0, 1.0);

    const Matrix2 fwd = dict_forward(z, d);
    const ChannelStack adj = dict_adjoint(y, d);
    double lhs = 0.0, rhs = 0.0, nz = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < fwd.size(); ++i)
      lhs += fwd.data[i] * y.data[i];
    for (std::size_t i = 0; i < z.data.size(); ++i)
      rhs += z.data[i] * adj.data[i];
    for (double v : z.data)
      nz += v * v;
    for (double v : y.data)
      ny += v * v;
    const double rel =
        std::abs(lhs - rhs) / std::max(1e-300, std::sqrt(nz) * std::sqrt(ny));
    worst = std::max(worst, rel);
  }
  std::ostringstream msg;
  msg << trials << " random triples, worst relative adjoint error " << worst;
  return {"adjoint", worst <= 1e-10, msg.str()};
}

SelftestResult gradient_suite(std::uint64_t seed) {
  NetArchitecture arch;
  arch.m = 4;
  arch.theta = 5;
  arch.n = 9;
  arch.kernel_sizes = {3, 5};
  arch.depth_min_um = -2.0;
  arch.depth_max_um = 2.0;
  CistaNetParams params = init_params(arch, splitmix64(seed ^ 0x96AD1ull));

  Rng rng(splitmix64(seed ^ 0x4F00ull));
  Matrix2 x = random_matrix(arch.theta, arch.n, rng, 0.0, 1.0);
  std::vector<double> label(arch.m);
  for (double &v : label)
    v = rng.uniform(0.0, 1.0);

  const ForwardCache cache = forward(x, params);
  CistaNetParams grads = backward(params, cache, label);

  const double h = 1e-5;
  double worst = 0.0;
  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(grads);
  for (std::size_t r = 0; r < p_refs.size(); ++r) {
    for (std::size_t i = 0; i < p_refs[r].size; ++i) {
      double &slot = p_refs[r].data[i];
      const double saved = slot;
      slot = saved + h;
      const double up = bce_loss(forward(x, params).logits, label);
      slot = saved - h;
      const double down = bce_loss(forward(x, params).logits, label);
      slot = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = g_refs[r].data[i];
      const double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  std::ostringstream msg;
  msg << parameter_count(arch) << " parameters, worst relative error vs "
      << "central differences " << worst;
  return {"gradient", worst <= 1e-4, msg.str()};
}

SelftestResult ista_descent_suite(std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x15DAull));
  OpticsConfig cfg;
  cfg.theta_u = cfg.theta_v = 7;
  cfg.n_x = cfg.n_y = 31;
  cfg.depth_min_um = -5.0;
  cfg.depth_max_um = 5.0;
  cfg.depth_count = 5;
  cfg.slope_per_um = 0.05;
  const EpiDictionary dict = build_dictionary(cfg, 7, 9);

  int violations = 0;
  const int trials = 20;
  double worst_gap = 0.0;
  for (int t = 0; t < trials; ++t) {
    Matrix2 x = random_matrix(cfg.theta_u, cfg.n_x, rng, 0.0, 1.0);
    SolverOptions opts;
    opts.lambda = 0.2;
    opts.max_iters = 50;
    opts.rel_tol = 1e-9;
    const auto [z, trace] = solve(x, dict, opts);
    for (std::size_t i = 1; i < trace.objective.size(); ++i) {
      const double gap = trace.objective[i] - trace.objective[i - 1];
      worst_gap = std::max(worst_gap, gap);
      if (gap > 1e-10)
        ++violations;
    }
  }
  std::ostringstream msg;
  msg << trials << " random solves, worst objective increase " << worst_gap;
  return {"ista-descent", violations == 0, msg.str()};
}

} // namespace

std::vector<SelftestResult> run_selftests(std::uint64_t seed) {
  return {adjoint_suite(seed), gradient_suite(seed), ista_descent_suite(seed)};
}

} // namespace epiloc
