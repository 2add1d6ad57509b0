#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "epiloc/types.hpp"

namespace epiloc {

struct SolverOptions {
  double lambda = 0.1;
  int max_iters = 200;
  double rel_tol = 1e-6;
  std::optional<double> step_gamma; // empty: auto, 0.99 / L
  double power_tol = 1e-6;
  int power_iters = 100;
  std::uint64_t power_seed = 0x9E3779B9u;

  void validate() const;
};

struct SolveTrace {
  std::vector<double> objective; // f(z^0), f(z^1), ...
  int iterations = 0;
  bool converged = false;
  double gamma = 0.0;
  double lipschitz = 0.0;
};

/// 0.5 * ||x - dict_forward(z, d)||_F^2 + lambda * sum_m ||z_m||_1
double objective(const Matrix2 &x, const EpiDictionary &d,
                 const ChannelStack &z, double lambda);

/// One proximal-gradient step:
/// T_{gamma*lambda}(z - gamma * dict_adjoint(dict_forward(z, d) - x, d)).
ChannelStack ista_step(const ChannelStack &z, const Matrix2 &x,
                       const EpiDictionary &d, double gamma, double lambda);

/// ISTA from z = 0 until the relative objective decrease drops below
/// rel_tol or max_iters is reached. The trace records every objective value.
std::pair<ChannelStack, SolveTrace> solve(const Matrix2 &x,
                                          const EpiDictionary &d,
                                          const SolverOptions &opts);

/// Per-channel maxima of the codes; the depth-readout evidence vector.
std::vector<double> code_evidence(const ChannelStack &z);

} // namespace epiloc
