#include "epiloc/cista_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "epiloc/binio.hpp"
#include "epiloc/rng.hpp"
#include "epiloc/synth_data.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace epiloc {

void NetArchitecture::validate() const {
  if (m < 1)
    throw ConfigError("architecture: m must be >= 1");
  if (theta < 1 || n < 1)
    throw ConfigError("architecture: input dimensions must be >= 1");
  if (kernel_sizes.empty())
    throw ConfigError("architecture: at least one layer required");
  int prev = 0;
  for (int k : kernel_sizes) {
    if (k < 1 || k % 2 == 0)
      throw ConfigError("architecture: kernel sizes must be odd and >= 1");
    if (k > theta || k > n)
      throw ConfigError("architecture: kernel larger than the input EPI");
    if (k < prev)
      throw ConfigError("architecture: kernel schedule must be non-decreasing");
    prev = k;
  }
  if (!(depth_min_um < depth_max_um))
    throw ConfigError("architecture: depth_min must be < depth_max");
}

std::vector<double> NetArchitecture::depth_grid() const {
  std::vector<double> grid(m);
  const double step = m > 1 ? (depth_max_um - depth_min_um) / (m - 1) : 0.0;
  for (int i = 0; i < m; ++i)
    grid[i] = depth_min_um + i * step;
  return grid;
}

CistaNetParams zero_like(const CistaNetParams &p) {
  CistaNetParams z;
  z.arch = p.arch;
  z.layers.reserve(p.layers.size());
  for (const LayerParams &lp : p.layers) {
    LayerParams zl;
    zl.s_filters = ChannelStack(lp.s_filters.channels, lp.s_filters.rows,
                                lp.s_filters.cols);
    zl.w_filters = ChannelStack(lp.w_filters.channels, lp.w_filters.rows,
                                lp.w_filters.cols);
    zl.bias.assign(lp.bias.size(), 0.0);
    z.layers.push_back(std::move(zl));
  }
  z.head.weights = Matrix2(p.head.weights.rows, p.head.weights.cols);
  z.head.bias.assign(p.head.bias.size(), 0.0);
  return z;
}

std::size_t parameter_count(const NetArchitecture &arch) {
  std::size_t total = 0;
  for (int k : arch.kernel_sizes)
    total += 2ull * arch.m * k * k + arch.m;
  total += static_cast<std::size_t>(arch.m) * arch.m + arch.m;
  return total;
}

std::vector<TensorRef> tensor_refs(CistaNetParams &p) {
  std::vector<TensorRef> refs;
  const auto u32 = [](int v) { return static_cast<std::uint32_t>(v); };
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    LayerParams &lp = p.layers[i];
    const std::string prefix = "layer" + std::to_string(i);
    refs.push_back({prefix + ".s_filters", lp.s_filters.data.data(),
                    {u32(lp.s_filters.channels), u32(lp.s_filters.rows),
                     u32(lp.s_filters.cols)},
                    lp.s_filters.size()});
    refs.push_back({prefix + ".w_filters", lp.w_filters.data.data(),
                    {u32(lp.w_filters.channels), u32(lp.w_filters.rows),
                     u32(lp.w_filters.cols)},
                    lp.w_filters.size()});
    refs.push_back({prefix + ".bias", lp.bias.data(),
                    {u32(static_cast<int>(lp.bias.size()))}, lp.bias.size()});
  }
  refs.push_back({"head.weights", p.head.weights.data.data(),
                  {u32(p.head.weights.rows), u32(p.head.weights.cols)},
                  p.head.weights.size()});
  refs.push_back({"head.bias", p.head.bias.data(),
                  {u32(static_cast<int>(p.head.bias.size()))},
                  p.head.bias.size()});
  return refs;
}

CistaNetParams init_params(const NetArchitecture &arch, std::uint64_t seed,
                           const EpiDictionary *init_dict) {
  arch.validate();
  if (init_dict) {
    if (init_dict->atoms.channels != arch.m)
      throw ConfigError("init_params: dictionary channel count != m");
    if (init_dict->atoms.rows > arch.kernel_sizes.front() ||
        init_dict->atoms.cols > arch.kernel_sizes.front())
      throw ConfigError("init_params: atoms larger than the first kernel");
  }

  Rng rng(splitmix64(seed));
  CistaNetParams p;
  p.arch = arch;
  for (int k : arch.kernel_sizes) {
    LayerParams lp;
    lp.s_filters = ChannelStack(arch.m, k, k);
    lp.w_filters = ChannelStack(arch.m, k, k);
    lp.bias.assign(arch.m, 0.01);
    const double bound = 1.0 / k; // 1/sqrt(k^2)
    for (double &v : lp.s_filters.data)
      v = rng.uniform(-bound, bound);
    for (double &v : lp.w_filters.data)
      v = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(lp));
  }
  p.head.weights = Matrix2(arch.m, arch.m);
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(arch.m));
  for (double &v : p.head.weights.data)
    v = rng.uniform(-head_bound, head_bound);
  p.head.bias.assign(arch.m, 0.01);

  if (init_dict) {
    const LipschitzEstimate est =
        estimate_lipschitz(init_dict->atoms, arch.theta, arch.n, 1e-6, 100,
                           splitmix64(seed ^ 0xD1C7B2A1ull));
    if (est.degenerate || est.value <= 0.0)
      throw ConfigError("init_params: degenerate dictionary");
    const double gamma = 0.99 / est.value;
    const int ar = init_dict->atoms.rows, ac = init_dict->atoms.cols;
    for (LayerParams &lp : p.layers) {
      const int k = lp.w_filters.rows;
      const int off_r = (k - ar) / 2, off_c = (k - ac) / 2;
      std::fill(lp.w_filters.data.begin(), lp.w_filters.data.end(), 0.0);
      for (int m = 0; m < arch.m; ++m) {
        const double *atom = init_dict->atoms.channel(m);
        for (int a = 0; a < ar; ++a)
          for (int b = 0; b < ac; ++b)
            lp.w_filters.at(m, off_r + a, off_c + b) =
                gamma * atom[static_cast<std::size_t>(a) * ac + b];
      }
    }
  }
  return p;
}

namespace {

double sigmoid(double t) {
  if (t >= 0.0)
    return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void check_input(const Matrix2 &x, const CistaNetParams &p, int bias_sign) {
  if (bias_sign != -1 && bias_sign != 1)
    throw ConfigError("bias_sign must be -1 or +1");
  if (x.rows != p.arch.theta || x.cols != p.arch.n)
    throw DimensionError("network input shape does not match the architecture");
  if (static_cast<int>(p.layers.size()) != p.arch.layer_count())
    throw DimensionError("parameter layer count does not match the architecture");
}

} // namespace

ForwardCache forward(const Matrix2 &x, const CistaNetParams &p, int bias_sign) {
  check_input(x, p, bias_sign);
  const int layer_count = p.arch.layer_count();
  const int m = p.arch.m;

  ForwardCache cache;
  cache.x = x;
  cache.bias_sign = bias_sign;
  cache.owner = &p;
  cache.layer_in.reserve(layer_count);
  cache.pre_act.reserve(layer_count);

  ChannelStack z(m, x.rows, x.cols); // Z^0 = 0
  ChannelStack inject(m, x.rows, x.cols);
  ChannelStack dw(m, x.rows, x.cols);
  const double sign = static_cast<double>(bias_sign);

  for (int i = 0; i < layer_count; ++i) {
    const LayerParams &lp = p.layers[i];
    cache.layer_in.push_back(z);
    perchannel_corr_into(x, lp.w_filters, inject);

    ChannelStack pre(m, x.rows, x.cols);
    const std::size_t ch_size = pre.channel_size();
    if (i == 0) {
      // The first layer sees Z = 0, so only the injection and bias remain.
      for (int c = 0; c < m; ++c) {
        const double beta = sign * lp.bias[c];
        const double *in = inject.channel(c);
        double *out = pre.channel(c);
        for (std::size_t idx = 0; idx < ch_size; ++idx)
          out[idx] = in[idx] + beta;
      }
    } else {
      depthwise_corr_into(z, lp.s_filters, dw);
      for (int c = 0; c < m; ++c) {
        const double beta = sign * lp.bias[c];
        const double *zc = z.channel(c);
        const double *dc = dw.channel(c);
        const double *in = inject.channel(c);
        double *out = pre.channel(c);
        for (std::size_t idx = 0; idx < ch_size; ++idx)
          out[idx] = zc[idx] - dc[idx] + in[idx] + beta;
      }
    }
    for (std::size_t idx = 0; idx < pre.data.size(); ++idx)
      z.data[idx] = pre.data[idx] > 0.0 ? pre.data[idx] : 0.0;
    cache.pre_act.push_back(std::move(pre));
  }

  cache.pool = global_max_pool(z);
  cache.logits.assign(m, 0.0);
  cache.probs.assign(m, 0.0);
  for (int r = 0; r < m; ++r) {
    double acc = p.head.bias[r];
    const double *w_row = p.head.weights.row(r);
    for (int c = 0; c < m; ++c)
      acc += w_row[c] * cache.pool.values[c];
    cache.logits[r] = acc;
    cache.probs[r] = sigmoid(acc);
  }
  return cache;
}

std::vector<double> infer(const Matrix2 &x, const CistaNetParams &p,
                          int bias_sign) {
  check_input(x, p, bias_sign);
  const int layer_count = p.arch.layer_count();
  const int m = p.arch.m;
  ChannelStack z(m, x.rows, x.cols);
  ChannelStack buf(m, x.rows, x.cols);
  ChannelStack dw(m, x.rows, x.cols);
  const double sign = static_cast<double>(bias_sign);

  for (int i = 0; i < layer_count; ++i) {
    const LayerParams &lp = p.layers[i];
    perchannel_corr_into(x, lp.w_filters, buf);
    const std::size_t ch_size = z.channel_size();
    if (i == 0) {
      for (int c = 0; c < m; ++c) {
        const double beta = sign * lp.bias[c];
        double *out = buf.channel(c);
        for (std::size_t idx = 0; idx < ch_size; ++idx) {
          const double v = out[idx] + beta;
          out[idx] = v > 0.0 ? v : 0.0;
        }
      }
    } else {
      depthwise_corr_into(z, lp.s_filters, dw);
      for (int c = 0; c < m; ++c) {
        const double beta = sign * lp.bias[c];
        const double *zc = z.channel(c);
        const double *dc = dw.channel(c);
        double *out = buf.channel(c);
        for (std::size_t idx = 0; idx < ch_size; ++idx) {
          const double v = zc[idx] - dc[idx] + out[idx] + beta;
          out[idx] = v > 0.0 ? v : 0.0;
        }
      }
    }
    z.data.swap(buf.data);
  }

  const MaxPoolResult pool = global_max_pool(z);
  std::vector<double> probs(m);
  for (int r = 0; r < m; ++r) {
    double acc = p.head.bias[r];
    const double *w_row = p.head.weights.row(r);
    for (int c = 0; c < m; ++c)
      acc += w_row[c] * pool.values[c];
    probs[r] = sigmoid(acc);
  }
  return probs;
}

double bce_loss(const std::vector<double> &logits,
                const std::vector<double> &label) {
  if (logits.size() != label.size())
    throw DimensionError("bce_loss: logits/label length mismatch");
  if (logits.empty())
    throw DimensionError("bce_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double y = label[i];
    if (y < 0.0 || y > 1.0)
      throw ConfigError("bce_loss: labels must lie in [0, 1]");
    const double t = logits[i];
    sum += std::max(t, 0.0) - t * y + std::log1p(std::exp(-std::abs(t)));
  }
  return sum / static_cast<double>(logits.size());
}

CistaNetParams backward(const CistaNetParams &p, const ForwardCache &cache,
                        const std::vector<double> &label) {
  if (cache.owner != &p)
    throw ContractViolationError(
        "backward: cache was produced by a different network");
  const int m = p.arch.m;
  const int layer_count = p.arch.layer_count();
  if (static_cast<int>(label.size()) != m)
    throw DimensionError("backward: label length != m");
  if (static_cast<int>(cache.pre_act.size()) != layer_count)
    throw ContractViolationError("backward: cache layer count mismatch");

  CistaNetParams grads = zero_like(p);

  // Fused sigmoid + BCE: dLoss/dlogit = (p - y) / M.
  std::vector<double> g_logit(m);
  for (int r = 0; r < m; ++r)
    g_logit[r] = (cache.probs[r] - label[r]) / static_cast<double>(m);

  grads.head.bias = g_logit;
  std::vector<double> g_pool(m, 0.0);
  for (int r = 0; r < m; ++r) {
    double *gw_row = grads.head.weights.row(r);
    const double *w_row = p.head.weights.row(r);
    const double gl = g_logit[r];
    for (int c = 0; c < m; ++c) {
      gw_row[c] = gl * cache.pool.values[c];
      g_pool[c] += w_row[c] * gl;
    }
  }

  // Max pool routes each channel's gradient to its cached argmax.
  ChannelStack g_z(m, p.arch.theta, p.arch.n);
  for (int c = 0; c < m; ++c) {
    const auto [pi, pj] = cache.pool.arg_positions[c];
    g_z.at(c, pi, pj) = g_pool[c];
  }

  ChannelStack dw(m, p.arch.theta, p.arch.n);
  const double sign = static_cast<double>(cache.bias_sign);
  for (int i = layer_count - 1; i >= 0; --i) {
    const LayerParams &lp = p.layers[i];
    LayerParams &gl = grads.layers[i];
    const ChannelStack &pre = cache.pre_act[i];
    const ChannelStack &layer_in = cache.layer_in[i];

    // ReLU mask (subgradient 0 at exactly 0), applied in place.
    for (std::size_t idx = 0; idx < g_z.data.size(); ++idx)
      if (!(pre.data[idx] > 0.0))
        g_z.data[idx] = 0.0;

#pragma omp parallel for schedule(static)
    for (int c = 0; c < m; ++c) {
      const double *g_ch = g_z.channel(c);
      double acc = 0.0;
      for (std::size_t idx = 0; idx < g_z.channel_size(); ++idx)
        acc += g_ch[idx];
      gl.bias[c] = sign * acc;

      detail::kernel_grad_raw(cache.x.data.data(), g_ch, p.arch.theta,
                              p.arch.n, gl.w_filters.channel(c),
                              lp.w_filters.rows, lp.w_filters.cols);
      if (i > 0) {
        // d/dS of -corr(Z_in, S): the kernel gradient, negated. Layer 0's
        // input is identically zero, so its S gradient stays zero.
        detail::kernel_grad_raw(layer_in.channel(c), g_ch, p.arch.theta,
                                p.arch.n, gl.s_filters.channel(c),
                                lp.s_filters.rows, lp.s_filters.cols);
        double *gs = gl.s_filters.channel(c);
        for (std::size_t idx = 0; idx < gl.s_filters.channel_size(); ++idx)
          gs[idx] = -gs[idx];
      }
    }

    if (i > 0) {
      // dpre/dZ_in = identity - depthwise_corr( . , S); its adjoint applied
      // to the masked gradient.
      depthwise_conv_into(g_z, lp.s_filters, dw);
      for (std::size_t idx = 0; idx < g_z.data.size(); ++idx)
        g_z.data[idx] -= dw.data[idx];
    }
  }
  return grads;
}

AdamState make_adam_state(const CistaNetParams &p) {
  AdamState st;
  st.first_moment = zero_like(p);
  st.second_moment = zero_like(p);
  st.step = 0;
  return st;
}

void adam_update(double *param, const double *grad, double *m, double *v,
                 std::size_t count, std::int64_t t, const AdamOptions &opts) {
  if (t < 1)
    throw ConfigError("adam_update: step counter must be >= 1");
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < count; ++i) {
    m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * grad[i];
    v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
  }
}

void adam_step(CistaNetParams &params, const CistaNetParams &grads,
               AdamState &state, const AdamOptions &opts) {
  if (opts.beta1 < 0.0 || opts.beta1 >= 1.0 || opts.beta2 < 0.0 ||
      opts.beta2 >= 1.0 || !(opts.lr > 0.0) || !(opts.eps > 0.0))
    throw ConfigError("adam_step: invalid options");
  ++state.step;
  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(const_cast<CistaNetParams &>(grads));
  auto m_refs = tensor_refs(state.first_moment);
  auto v_refs = tensor_refs(state.second_moment);
  if (g_refs.size() != p_refs.size())
    throw DimensionError("adam_step: gradient structure mismatch");
  for (std::size_t i = 0; i < p_refs.size(); ++i) {
    if (g_refs[i].size != p_refs[i].size)
      throw DimensionError("adam_step: tensor size mismatch at " + p_refs[i].name);
    adam_update(p_refs[i].data, g_refs[i].data, m_refs[i].data, v_refs[i].data,
                p_refs[i].size, state.step, opts);
  }
  // Non-negative bias projection: the per-layer thresholds of the unrolled
  // soft-thresholding must stay >= 0.
  for (LayerParams &lp : params.layers)
    for (double &b : lp.bias)
      b = std::max(b, 0.0);
}

namespace {

std::string kernel_sizes_csv(const NetArchitecture &arch) {
  std::string out;
  for (std::size_t i = 0; i < arch.kernel_sizes.size(); ++i) {
    if (i)
      out += ',';
    out += std::to_string(arch.kernel_sizes[i]);
  }
  return out;
}

constexpr char kModelMagic[] = "CISTA1\n";

} // namespace

void save_model(const CistaNetParams &params, const std::string &path) {
  params.arch.validate();
  auto refs = tensor_refs(const_cast<CistaNetParams &>(params)); // read-only
  std::ofstream os = binio::open_output(path);
  binio::write_magic_and_header(
      os, kModelMagic,
      {{"version", "1"},
       {"m", binio::format_u64(params.arch.m)},
       {"theta", binio::format_u64(params.arch.theta)},
       {"n", binio::format_u64(params.arch.n)},
       {"layers", binio::format_u64(params.arch.layer_count())},
       {"kernel_sizes", kernel_sizes_csv(params.arch)},
       {"depth_min", binio::format_double(params.arch.depth_min_um)},
       {"depth_max", binio::format_double(params.arch.depth_max_um)}});
  for (const TensorRef &ref : refs) {
    binio::write_u16(os, static_cast<std::uint16_t>(ref.name.size()));
    os.write(ref.name.data(), static_cast<std::streamsize>(ref.name.size()));
    binio::write_u8(os, static_cast<std::uint8_t>(ref.dims.size()));
    for (std::uint32_t d : ref.dims)
      binio::write_u32(os, d);
    binio::write_f32(os, ref.data, ref.size);
  }
  if (!os)
    throw IoError("save_model: write failed for '" + path + "'");
}

CistaNetParams load_model(const std::string &path) {
  std::ifstream is = binio::open_input(path);
  auto fields = binio::read_magic_and_header(is, kModelMagic, "model");
  if (binio::parse_i64(binio::require_key(fields, "version", "model")) != 1)
    throw VersionMismatchError("model: unsupported version");

  NetArchitecture arch;
  arch.m = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "m", "model")));
  arch.theta = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "theta", "model")));
  arch.n = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "n", "model")));
  const std::int64_t layer_count =
      binio::parse_i64(binio::require_key(fields, "layers", "model"));
  arch.depth_min_um =
      binio::parse_double(binio::require_key(fields, "depth_min", "model"));
  arch.depth_max_um =
      binio::parse_double(binio::require_key(fields, "depth_max", "model"));

  arch.kernel_sizes.clear();
  {
    const std::string &csv = binio::require_key(fields, "kernel_sizes", "model");
    std::size_t pos = 0;
    while (pos <= csv.size()) {
      const std::size_t comma = csv.find(',', pos);
      const std::string tok =
          csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                     : comma - pos);
      arch.kernel_sizes.push_back(static_cast<int>(binio::parse_i64(tok)));
      if (comma == std::string::npos)
        break;
      pos = comma + 1;
    }
  }
  if (static_cast<std::int64_t>(arch.kernel_sizes.size()) != layer_count)
    throw ShapeMismatchError("model: kernel_sizes count != layers");
  try {
    arch.validate();
  } catch (const ConfigError &e) {
    throw ShapeMismatchError(std::string("model: invalid architecture: ") +
                             e.what());
  }

  CistaNetParams params;
  params.arch = arch;
  for (int k : arch.kernel_sizes) {
    LayerParams lp;
    lp.s_filters = ChannelStack(arch.m, k, k);
    lp.w_filters = ChannelStack(arch.m, k, k);
    lp.bias.assign(arch.m, 0.0);
    params.layers.push_back(std::move(lp));
  }
  params.head.weights = Matrix2(arch.m, arch.m);
  params.head.bias.assign(arch.m, 0.0);

  for (TensorRef &ref : tensor_refs(params)) {
    const std::uint16_t name_len = binio::read_u16(is, "model");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (is.gcount() != name_len)
      throw TruncatedFileError("model: truncated tensor name");
    if (name != ref.name)
      throw ShapeMismatchError("model: expected tensor '" + ref.name +
                               "', found '" + name + "'");
    const std::uint8_t rank = binio::read_u8(is, "model");
    if (rank != ref.dims.size())
      throw ShapeMismatchError("model: tensor '" + ref.name + "' rank mismatch");
    for (std::uint32_t expect : ref.dims) {
      const std::uint32_t got = binio::read_u32(is, "model");
      if (got != expect)
        throw ShapeMismatchError("model: tensor '" + ref.name +
                                 "' dimension mismatch");
    }
    binio::read_f32(is, ref.data, ref.size, "model: tensor '" + ref.name + "'");
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw IoError("model: trailing bytes after the last tensor");
  return params;
}

namespace {

struct ThreadLimitGuard {
  int saved;
  explicit ThreadLimitGuard(bool single) : saved(0) {
#ifdef _OPENMP
    saved = omp_get_max_threads();
    if (single)
      omp_set_num_threads(1);
#else
    (void)single;
#endif
  }
  ~ThreadLimitGuard() {
#ifdef _OPENMP
    omp_set_num_threads(saved);
#endif
  }
};

void fisher_yates(std::vector<std::uint32_t> &v, Rng &rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

double param_norm(CistaNetParams &p) {
  double acc = 0.0;
  for (const TensorRef &ref : tensor_refs(p))
    for (std::size_t i = 0; i < ref.size; ++i)
      acc += ref.data[i] * ref.data[i];
  return std::sqrt(acc);
}

void accumulate_scaled(CistaNetParams &dst, CistaNetParams &src, double alpha) {
  auto d_refs = tensor_refs(dst);
  auto s_refs = tensor_refs(src);
  for (std::size_t r = 0; r < d_refs.size(); ++r)
    for (std::size_t i = 0; i < d_refs[r].size; ++i)
      d_refs[r].data[i] += alpha * s_refs[r].data[i];
}

void zero_fill(CistaNetParams &p) {
  for (const TensorRef &ref : tensor_refs(p))
    std::fill(ref.data, ref.data + ref.size, 0.0);
}

} // namespace

TrainingReport train(const std::string &dataset_path,
                     const NetArchitecture &arch, const TrainHyper &hyper,
                     const std::string &out_model_path,
                     const EpiDictionary *init_dict,
                     const std::string &loss_csv_path) {
  arch.validate();
  if (hyper.epochs < 0)
    throw ConfigError("train: epochs must be >= 0");
  if (hyper.batch < 1)
    throw ConfigError("train: batch must be >= 1");
  if (!(hyper.lr > 0.0))
    throw ConfigError("train: lr must be > 0");
  if (hyper.val_fraction < 0.0 || hyper.val_fraction >= 1.0)
    throw ConfigError("train: val_fraction must lie in [0, 1)");

  ThreadLimitGuard guard(hyper.single_thread);

  DatasetReader reader(dataset_path);
  const DatasetHeader &header = reader.header();
  if (header.m != arch.m || header.theta != arch.theta || header.n != arch.n)
    throw ConfigError("train: dataset shape (m,theta,n) does not match the "
                      "architecture");
  const std::vector<LabeledSample> samples = reader.read_all();
  const std::size_t count = samples.size();
  if (count == 0)
    throw ConfigError("train: empty dataset");

  // Deterministic split: seeded shuffle, validation head, training tail.
  std::vector<std::uint32_t> order(count);
  for (std::size_t i = 0; i < count; ++i)
    order[i] = static_cast<std::uint32_t>(i);
  {
    Rng split_rng(stream_seed(hyper.seed, 0x51D5ull));
    fisher_yates(order, split_rng);
  }
  std::size_t val_n =
      static_cast<std::size_t>(std::llround(hyper.val_fraction * count));
  if (val_n >= count)
    val_n = count - 1;
  std::vector<std::uint32_t> val_idx(order.begin(), order.begin() + val_n);
  std::vector<std::uint32_t> train_idx(order.begin() + val_n, order.end());

  CistaNetParams params = init_params(arch, hyper.seed, init_dict);
  AdamState adam = make_adam_state(params);
  AdamOptions adam_opts;
  adam_opts.lr = hyper.lr;

  TrainingReport report;
  report.train_samples = train_idx.size();
  report.val_samples = val_idx.size();
  report.best_val_loss = std::numeric_limits<double>::infinity();

  CistaNetParams best = params;
  CistaNetParams grad_accum = zero_like(params);
  const int batch = hyper.batch;
  std::vector<CistaNetParams> grad_pool(batch, zero_like(params));
  std::vector<double> sample_loss(batch, 0.0);

  auto mean_val_loss = [&]() {
    if (val_idx.empty())
      return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> losses(val_idx.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(val_idx.size()); ++j) {
      const LabeledSample &s = samples[val_idx[j]];
      const ForwardCache c = forward(s.epi, params, hyper.bias_sign);
      losses[j] = bce_loss(c.logits, s.label);
    }
    double sum = 0.0; // fixed-order reduction
    for (double l : losses)
      sum += l;
    return sum / static_cast<double>(val_idx.size());
  };

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    Rng shuffle_rng(stream_seed(hyper.seed, 0xE90C5ull + epoch));
    fisher_yates(train_idx, shuffle_rng);

    double epoch_loss_sum = 0.0;
    for (std::size_t base = 0; base < train_idx.size(); base += batch) {
      const std::size_t take = std::min<std::size_t>(batch, train_idx.size() - base);
#pragma omp parallel for schedule(static)
      for (std::int64_t j = 0; j < static_cast<std::int64_t>(take); ++j) {
        const LabeledSample &s = samples[train_idx[base + j]];
        const ForwardCache c = forward(s.epi, params, hyper.bias_sign);
        sample_loss[j] = bce_loss(c.logits, s.label);
        grad_pool[j] = backward(params, c, s.label);
      }

      zero_fill(grad_accum);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < take; ++j) { // fixed index order
        batch_loss += sample_loss[j];
        accumulate_scaled(grad_accum, grad_pool[j], 1.0 / static_cast<double>(take));
      }
      if (!std::isfinite(batch_loss))
        throw NumericalError(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(base / batch) +
            ", parameter norm " + std::to_string(param_norm(params)));
      epoch_loss_sum += batch_loss;
      adam_step(params, grad_accum, adam, adam_opts);
    }

    report.train_loss.push_back(epoch_loss_sum /
                                static_cast<double>(train_idx.size()));
    const double val = mean_val_loss();
    report.val_loss.push_back(std::isnan(val) ? report.train_loss.back() : val);
    if (report.val_loss.back() < report.best_val_loss) {
      report.best_val_loss = report.val_loss.back();
      report.best_epoch = epoch;
      best = params;
    }
  }

  if (hyper.epochs == 0 || report.best_epoch == 0) {
    best = params; // initialization (epochs == 0) or last state
    report.best_epoch = hyper.epochs;
    report.best_val_loss =
        report.val_loss.empty() ? 0.0 : report.val_loss.back();
  }

  save_model(best, out_model_path);

  const std::string csv_path =
      loss_csv_path.empty() ? out_model_path + ".loss.csv" : loss_csv_path;
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv)
    throw IoError("train: cannot write loss CSV '" + csv_path + "'");
  csv << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e)
    csv << (e + 1) << ',' << binio::format_double(report.train_loss[e]) << ','
        << binio::format_double(report.val_loss[e]) << '\n';

  return report;
}

} // namespace epiloc
