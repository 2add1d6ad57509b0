#include "epiloc/csc_ista.hpp"

#include <cmath>

#include "epiloc/conv_ops.hpp"

namespace epiloc {

void SolverOptions::validate() const {
  if (lambda < 0.0)
    throw ConfigError("solver: lambda must be >= 0");
  if (max_iters < 1)
    throw ConfigError("solver: max_iters must be >= 1");
  if (!(rel_tol > 0.0))
    throw ConfigError("solver: rel_tol must be > 0");
  if (step_gamma && !(*step_gamma > 0.0))
    throw ConfigError("solver: explicit step size must be > 0");
}

namespace {

void check_problem(const Matrix2 &x, const EpiDictionary &d) {
  if (static_cast<int>(d.depth_um.size()) != d.atoms.channels)
    throw DimensionError("solver: dictionary depth grid does not match atoms");
  detail::check_kernel_dims(x.rows, x.cols, d.atoms.rows, d.atoms.cols);
}

double objective_from_residual(const Matrix2 &residual, const ChannelStack &z,
                               double lambda) {
  double fit = 0.0;
  for (double v : residual.data)
    fit += v * v;
  double l1 = 0.0;
  for (double v : z.data)
    l1 += std::abs(v);
  return 0.5 * fit + lambda * l1;
}

} // namespace

double objective(const Matrix2 &x, const EpiDictionary &d,
                 const ChannelStack &z, double lambda) {
  check_problem(x, d);
  if (z.channels != d.atoms.channels || z.rows != x.rows || z.cols != x.cols)
    throw DimensionError("objective: code stack shape mismatch");
  Matrix2 residual = dict_forward(z, d.atoms);
  for (std::size_t i = 0; i < residual.size(); ++i)
    residual.data[i] -= x.data[i];
  return objective_from_residual(residual, z, lambda);
}

ChannelStack ista_step(const ChannelStack &z, const Matrix2 &x,
                       const EpiDictionary &d, double gamma, double lambda) {
  check_problem(x, d);
  if (z.channels != d.atoms.channels || z.rows != x.rows || z.cols != x.cols)
    throw DimensionError("ista_step: code stack shape mismatch");
  if (!(gamma > 0.0))
    throw ConfigError("ista_step: gamma must be > 0");
  if (lambda < 0.0)
    throw ConfigError("ista_step: lambda must be >= 0");

  Matrix2 residual = dict_forward(z, d.atoms);
  for (std::size_t i = 0; i < residual.size(); ++i)
    residual.data[i] -= x.data[i];
  ChannelStack grad = dict_adjoint(residual, d.atoms);

  ChannelStack out(z.channels, z.rows, z.cols);
  const double thresh = gamma * lambda;
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    const double v = z.data[i] - gamma * grad.data[i];
    const double mag = std::abs(v) - thresh;
    out.data[i] = mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

std::pair<ChannelStack, SolveTrace> solve(const Matrix2 &x,
                                          const EpiDictionary &d,
                                          const SolverOptions &opts) {
  opts.validate();
  check_problem(x, d);

  SolveTrace trace;
  if (opts.step_gamma) {
    trace.gamma = *opts.step_gamma;
  } else {
    const LipschitzEstimate est =
        estimate_lipschitz(d.atoms, x.rows, x.cols, opts.power_tol,
                           opts.power_iters, opts.power_seed);
    trace.lipschitz = est.value;
    if (est.degenerate || est.value <= 0.0)
      throw NumericalError("solve: degenerate problem (zero dictionary)");
    trace.gamma = 0.99 / est.value;
  }

  const int channels = d.atoms.channels;
  ChannelStack z(channels, x.rows, x.cols); // z^0 = 0
  Matrix2 residual(x.rows, x.cols);
  ChannelStack grad(channels, x.rows, x.cols);

  // The residual of the current iterate is shared between the objective and
  // the gradient, so each iteration costs one forward plus one adjoint.
  auto refresh_residual = [&]() {
    dict_forward_into(z, d.atoms, residual);
    for (std::size_t i = 0; i < residual.size(); ++i)
      residual.data[i] -= x.data[i];
  };

  refresh_residual();
  double f_cur = objective_from_residual(residual, z, opts.lambda);
  trace.objective.push_back(f_cur);

  const double thresh = trace.gamma * opts.lambda;
  for (int it = 1; it <= opts.max_iters; ++it) {
    dict_adjoint_into(residual, d.atoms, grad);
    for (std::size_t i = 0; i < z.data.size(); ++i) {
      const double v = z.data[i] - trace.gamma * grad.data[i];
      const double mag = std::abs(v) - thresh;
      z.data[i] = mag > 0.0 ? (v > 0.0 ? mag : -mag) : 0.0;
    }
    trace.iterations = it;

    refresh_residual();
    const double f_new = objective_from_residual(residual, z, opts.lambda);
    trace.objective.push_back(f_new);
    if (f_cur - f_new <= opts.rel_tol * f_cur) {
      trace.converged = true;
      break;
    }
    f_cur = f_new;
  }
  return {std::move(z), std::move(trace)};
}

std::vector<double> code_evidence(const ChannelStack &z) {
  return global_max_pool(z).values;
}

} // namespace epiloc
