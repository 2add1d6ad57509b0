#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "epiloc/conv_ops.hpp"
#include "epiloc/rng.hpp"
#include "oracles.hpp"

using namespace epiloc;

namespace {

double dot(const std::vector<double> &a, const std::vector<double> &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double> &a) { return std::sqrt(dot(a, a)); }

Matrix2 delta_kernel() {
  Matrix2 k(1, 1);
  k(0, 0) = 1.0;
  return k;
}

} // namespace

TEST_CASE("corr2_same: identity kernel") {
  Rng rng(1);
  const Matrix2 x = oracle::random_matrix(4, 6, rng);
  const Matrix2 out = corr2_same(x, delta_kernel());
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(out.data[i] == x.data[i]);
}

TEST_CASE("corr2_same: zero-padding overlap counts") {
  const Matrix2 x(3, 3, 1.0);
  const Matrix2 k(3, 3, 1.0);
  const Matrix2 out = corr2_same(x, k);
  CHECK(out(1, 1) == doctest::Approx(9.0));
  for (auto [i, j] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}})
    CHECK(out(i, j) == doctest::Approx(4.0));
  for (auto [i, j] : {std::pair{0, 1}, {1, 0}, {1, 2}, {2, 1}})
    CHECK(out(i, j) == doctest::Approx(6.0));
}

TEST_CASE("corr2_same: matches the quadruple-loop oracle") {
  Rng rng(42);
  const Matrix2 x = oracle::random_matrix(5, 7, rng);
  const Matrix2 k = oracle::random_matrix(3, 3, rng);
  const Matrix2 got = corr2_same(x, k);
  const Matrix2 want = oracle::naive_corr(x, k);
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("corr2_same: kernel validation") {
  const Matrix2 x(4, 4, 1.0);
  CHECK_THROWS_AS(corr2_same(x, Matrix2(2, 3, 1.0)), InvalidKernelError);
  CHECK_THROWS_AS(corr2_same(x, Matrix2(3, 2, 1.0)), InvalidKernelError);
  CHECK_THROWS_AS(corr2_same(x, Matrix2(5, 3, 1.0)), InvalidKernelError);
  CHECK_THROWS_AS(corr2_same(x, Matrix2(3, 5, 1.0)), InvalidKernelError);
}

TEST_CASE("conv2_same: identity, symmetry, loop oracle") {
  Rng rng(7);
  const Matrix2 x = oracle::random_matrix(6, 9, rng);
  const Matrix2 id = conv2_same(x, delta_kernel());
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(id.data[i] == x.data[i]);

  // A symmetric kernel makes convolution and correlation agree.
  Matrix2 sym(3, 3);
  const double vals[9] = {1, 2, 3, 2, 5, 2, 3, 2, 1};
  std::copy(vals, vals + 9, sym.data.begin());
  const Matrix2 a = conv2_same(x, sym);
  const Matrix2 b = corr2_same(x, sym);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-12));

  const Matrix2 k = oracle::random_matrix(3, 5, rng);
  const Matrix2 got = conv2_same(x, k);
  const Matrix2 want = oracle::naive_conv(x, k);
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("dict_forward: identity atom and linearity") {
  Rng rng(3);
  ChannelStack d(1, 1, 1);
  d.at(0, 0, 0) = 1.0;
  const ChannelStack z = oracle::random_stack(1, 5, 8, rng);
  const Matrix2 out = dict_forward(z, d);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.data[i] == z.data[i]);

  const ChannelStack d3 = oracle::random_stack(3, 3, 3, rng);
  const ChannelStack z1 = oracle::random_stack(3, 5, 8, rng);
  const ChannelStack z2 = oracle::random_stack(3, 5, 8, rng);
  const double alpha = 1.7, beta = -0.4;
  ChannelStack mix(3, 5, 8);
  for (std::size_t i = 0; i < mix.data.size(); ++i)
    mix.data[i] = alpha * z1.data[i] + beta * z2.data[i];
  const Matrix2 lhs = dict_forward(mix, d3);
  const Matrix2 f1 = dict_forward(z1, d3);
  const Matrix2 f2 = dict_forward(z2, d3);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs.data[i] ==
          doctest::Approx(alpha * f1.data[i] + beta * f2.data[i]).epsilon(1e-12));

  CHECK_THROWS_AS(dict_forward(oracle::random_stack(2, 5, 8, rng), d3),
                  DimensionError);
}

TEST_CASE("dict_forward/dict_adjoint: dense-matrix oracle") {
  Rng rng(11);
  const int theta = 5, n = 8, m = 3;
  const ChannelStack d = oracle::random_stack(m, 3, 3, rng);
  const oracle::DenseOp op = oracle::build_dense(d, theta, n);

  const ChannelStack z = oracle::random_stack(m, theta, n, rng);
  const Matrix2 fwd = dict_forward(z, d);
  const std::vector<double> dense_fwd = oracle::apply(op, z.data);
  for (std::size_t i = 0; i < fwd.size(); ++i)
    CHECK(fwd.data[i] == doctest::Approx(dense_fwd[i]).epsilon(1e-10));

  const Matrix2 y = oracle::random_matrix(theta, n, rng);
  const ChannelStack adj = dict_adjoint(y, d);
  const std::vector<double> dense_adj = oracle::apply_transpose(op, y.data);
  for (std::size_t i = 0; i < adj.data.size(); ++i)
    CHECK(adj.data[i] == doctest::Approx(dense_adj[i]).epsilon(1e-10));
}

TEST_CASE("dict_adjoint: identity atom and adjoint identity over 1000 trials") {
  Rng rng(1234);
  ChannelStack d1(1, 1, 1);
  d1.at(0, 0, 0) = 1.0;
  const Matrix2 y0 = oracle::random_matrix(4, 6, rng);
  const ChannelStack back = dict_adjoint(y0, d1);
  for (std::size_t i = 0; i < y0.size(); ++i)
    CHECK(back.data[i] == y0.data[i]);

  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int m = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int rows = 3 + static_cast<int>(rng.uniform_int(0, 5));
    const int cols = 3 + static_cast<int>(rng.uniform_int(0, 7));
    const int kr = 1 + 2 * static_cast<int>(rng.uniform_int(0, 1));
    const int kc = 1 + 2 * static_cast<int>(rng.uniform_int(0, 1));
    const ChannelStack d = oracle::random_stack(m, kr, kc, rng);
    const ChannelStack z = oracle::random_stack(m, rows, cols, rng);
    const Matrix2 y = oracle::random_matrix(rows, cols, rng);
    const double lhs = dot(dict_forward(z, d).data, y.data);
    const double rhs = dot(z.data, dict_adjoint(y, d).data);
    const double rel =
        std::abs(lhs - rhs) / std::max(1e-300, norm(z.data) * norm(y.data));
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("depthwise_corr: identity, channel separation, loop oracle") {
  Rng rng(5);
  const int m = 3;
  ChannelStack ones(m, 1, 1, 1.0);
  const ChannelStack z = oracle::random_stack(m, 5, 6, rng);
  const ChannelStack same = depthwise_corr(z, ones);
  for (std::size_t i = 0; i < z.data.size(); ++i)
    CHECK(same.data[i] == z.data[i]);

  ChannelStack s = oracle::random_stack(m, 3, 3, rng);
  const ChannelStack base = depthwise_corr(z, s);
  ChannelStack s_mod = s;
  s_mod.at(1, 0, 2) += 0.5; // perturb only channel 1
  const ChannelStack mod = depthwise_corr(z, s_mod);
  for (int c = 0; c < m; ++c) {
    bool changed = false;
    for (std::size_t i = 0; i < z.channel_size(); ++i)
      if (base.channel(c)[i] != mod.channel(c)[i])
        changed = true;
    CHECK(changed == (c == 1));
  }

  for (int c = 0; c < m; ++c) {
    const Matrix2 want = oracle::naive_corr(z.channel_matrix(c), s.channel_matrix(c));
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(base.channel(c)[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(depthwise_corr(z, oracle::random_stack(m + 1, 3, 3, rng)),
                  DimensionError);
}

TEST_CASE("depthwise_conv is the adjoint of depthwise_corr") {
  Rng rng(6);
  const ChannelStack s = oracle::random_stack(4, 3, 5, rng);
  const ChannelStack z = oracle::random_stack(4, 6, 7, rng);
  const ChannelStack y = oracle::random_stack(4, 6, 7, rng);
  const double lhs = dot(depthwise_corr(z, s).data, y.data);
  const double rhs = dot(z.data, depthwise_conv(y, s).data);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("kernel_grad_corr matches finite differences of <g, corr(x,k)>") {
  Rng rng(9);
  const Matrix2 x = oracle::random_matrix(5, 7, rng);
  const Matrix2 g = oracle::random_matrix(5, 7, rng);
  Matrix2 k = oracle::random_matrix(3, 3, rng);
  const Matrix2 grad = kernel_grad_corr(x, g, 3, 3);
  const double h = 1e-6;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const double saved = k(a, b);
      k(a, b) = saved + h;
      const double up = dot(corr2_same(x, k).data, g.data);
      k(a, b) = saved - h;
      const double down = dot(corr2_same(x, k).data, g.data);
      k(a, b) = saved;
      CHECK(grad(a, b) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("estimate_lipschitz: delta atom, scalar atom, dense eigen oracle") {
  ChannelStack delta(1, 1, 1);
  delta.at(0, 0, 0) = 1.0;
  const LipschitzEstimate unit = estimate_lipschitz(delta, 6, 6, 1e-9, 200, 1);
  CHECK(unit.value == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(unit.degenerate);

  ChannelStack scalar(1, 1, 1);
  scalar.at(0, 0, 0) = -1.75;
  const LipschitzEstimate sq = estimate_lipschitz(scalar, 4, 5, 1e-9, 200, 1);
  CHECK(sq.value == doctest::Approx(1.75 * 1.75).epsilon(1e-9));

  Rng rng(17);
  const ChannelStack d = oracle::random_stack(2, 3, 3, rng);
  const LipschitzEstimate est = estimate_lipschitz(d, 4, 5, 1e-12, 5000, 3);
  const double dense = oracle::max_gram_eigenvalue(oracle::build_dense(d, 4, 5));
  CHECK(est.value == doctest::Approx(dense).epsilon(1e-6));

  const ChannelStack zero(2, 3, 3);
  const LipschitzEstimate deg = estimate_lipschitz(zero, 4, 5, 1e-6, 50, 1);
  CHECK(deg.degenerate);
  CHECK(deg.value == 0.0);
}

TEST_CASE("estimate_lipschitz bounds the Gram operator on random inputs") {
  Rng rng(21);
  const ChannelStack d = oracle::random_stack(3, 3, 5, rng);
  const double tol = 1e-8;
  const LipschitzEstimate est = estimate_lipschitz(d, 6, 9, tol, 2000, 5);
  for (int t = 0; t < 100; ++t) {
    const ChannelStack z = oracle::random_stack(3, 6, 9, rng);
    const ChannelStack gz = dict_adjoint(dict_forward(z, d), d);
    CHECK(norm(gz.data) <= (est.value + tol * est.value) * norm(z.data));
  }
}

TEST_CASE("soft_threshold") {
  CHECK(soft_threshold(1.2, 0.5) == doctest::Approx(0.7));
  CHECK(soft_threshold(-0.3, 0.5) == 0.0);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const double x = rng.uniform(-5, 5);
    CHECK(soft_threshold(x, 0.0) == x);
  }
  CHECK_THROWS_AS(soft_threshold(1.0, -0.1), InvalidThresholdError);

  // Non-expansiveness.
  for (int t = 0; t < 200; ++t) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    const double thr = rng.uniform(0, 2);
    CHECK(std::abs(soft_threshold(a, thr) - soft_threshold(b, thr)) <=
          std::abs(a - b) + 1e-15);
  }
}

TEST_CASE("global_max_pool: zeros, single peak, row-major tie-break") {
  ChannelStack z(2, 4, 5);
  const MaxPoolResult zeros = global_max_pool(z);
  CHECK(zeros.values[0] == 0.0);
  CHECK(zeros.values[1] == 0.0);
  CHECK(zeros.arg_positions[0] == std::pair{0, 0});

  z.at(0, 2, 3) = 5.0;
  const MaxPoolResult peak = global_max_pool(z);
  CHECK(peak.values[0] == 5.0);
  CHECK(peak.arg_positions[0] == std::pair{2, 3});

  ChannelStack ties(1, 4, 5);
  ties.at(0, 1, 1) = 2.0;
  ties.at(0, 2, 2) = 2.0;
  const MaxPoolResult tie = global_max_pool(ties);
  CHECK(tie.arg_positions[0] == std::pair{1, 1});
}

TEST_CASE("linearity of corr/conv in the signal argument") {
  Rng rng(33);
  const Matrix2 x1 = oracle::random_matrix(5, 6, rng);
  const Matrix2 x2 = oracle::random_matrix(5, 6, rng);
  const Matrix2 k = oracle::random_matrix(3, 3, rng);
  const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
  Matrix2 mix(5, 6);
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix.data[i] = alpha * x1.data[i] + beta * x2.data[i];
  const Matrix2 lhs = corr2_same(mix, k);
  const Matrix2 c1 = corr2_same(x1, k);
  const Matrix2 c2 = corr2_same(x2, k);
  for (std::size_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs.data[i] ==
          doctest::Approx(alpha * c1.data[i] + beta * c2.data[i]).epsilon(1e-12));
}

TEST_CASE("parallel kernels match the serial reference") {
  Rng rng(88);
  for (int t = 0; t < 25; ++t) {
    const int m = 1 + static_cast<int>(rng.uniform_int(0, 4));
    const int rows = 5 + static_cast<int>(rng.uniform_int(0, 14));
    const int cols = 5 + static_cast<int>(rng.uniform_int(0, 20));
    const int kr = 1 + 2 * static_cast<int>(rng.uniform_int(0, 2));
    const int kc = 1 + 2 * static_cast<int>(rng.uniform_int(0, 2));
    const ChannelStack d = oracle::random_stack(m, kr, kc, rng);
    const ChannelStack z = oracle::random_stack(m, rows, cols, rng);
    const Matrix2 y = oracle::random_matrix(rows, cols, rng);

    const Matrix2 f_par = dict_forward(z, d);
    const Matrix2 f_ser = serial::dict_forward(z, d);
    for (std::size_t i = 0; i < f_par.size(); ++i)
      CHECK(f_par.data[i] == doctest::Approx(f_ser.data[i]).epsilon(1e-12));

    const ChannelStack a_par = dict_adjoint(y, d);
    const ChannelStack a_ser = serial::dict_adjoint(y, d);
    for (std::size_t i = 0; i < a_par.data.size(); ++i)
      CHECK(a_par.data[i] == doctest::Approx(a_ser.data[i]).epsilon(1e-12));

    const ChannelStack w_par = depthwise_corr(z, d);
    const ChannelStack w_ser = serial::depthwise_corr(z, d);
    for (std::size_t i = 0; i < w_par.data.size(); ++i)
      CHECK(w_par.data[i] == doctest::Approx(w_ser.data[i]).epsilon(1e-12));
  }
}
