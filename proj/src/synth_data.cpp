#include "epiloc/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "epiloc/binio.hpp"
#include "epiloc/rng.hpp"

namespace epiloc {

void OpticsConfig::validate() const {
  if (theta_u < 1 || theta_v < 1 || theta_u % 2 == 0 || theta_v % 2 == 0)
    throw ConfigError("optics: angular sample counts must be odd and >= 1");
  if (n_x < 1 || n_y < 1)
    throw ConfigError("optics: spatial sample counts must be >= 1");
  if (!std::isfinite(slope_per_um))
    throw ConfigError("optics: kappa must be finite");
  if (!(psf_sigma > 0.0))
    throw ConfigError("optics: psf_sigma must be > 0");
  if (!(depth_min_um < depth_max_um))
    throw ConfigError("optics: depth_min must be < depth_max");
  if (depth_count < 2)
    throw ConfigError("optics: depth_count must be >= 2");
  if (!(lateral_margin() < n_x / 2.0))
    throw ConfigError("optics: source lines do not stay in frame "
                      "(|kappa|*z_max*(theta_u-1)/2 + 3*psf_sigma >= n_x/2)");
}

std::vector<double> OpticsConfig::depth_grid() const {
  std::vector<double> grid(depth_count);
  const double step = (depth_max_um - depth_min_um) / (depth_count - 1);
  for (int m = 0; m < depth_count; ++m)
    grid[m] = depth_min_um + m * step;
  return grid;
}

double OpticsConfig::lateral_margin() const {
  const double z_abs = std::max(std::abs(depth_min_um), std::abs(depth_max_um));
  return std::abs(slope_per_um) * z_abs * (theta_u - 1) / 2.0 + 3.0 * psf_sigma;
}

double epi_slope(double z_um, const OpticsConfig &cfg) {
  if (z_um < cfg.depth_min_um || z_um > cfg.depth_max_um)
    throw RangeError("epi_slope: depth outside the configured range");
  return cfg.slope_per_um * z_um;
}

namespace {

void check_sources(const std::vector<Source> &sources, const OpticsConfig &cfg) {
  for (const Source &s : sources) {
    if (s.z_um < cfg.depth_min_um || s.z_um > cfg.depth_max_um)
      throw ConfigError("source depth outside the configured range");
    if (s.x0 < 0.0 || s.x0 >= cfg.n_x || s.y0 < 0.0 || s.y0 >= cfg.n_y)
      throw ConfigError("source lateral position outside the frame");
    if (!(s.amplitude > 0.0))
      throw ConfigError("source amplitude must be > 0");
  }
}

void render_epi_signal(const std::vector<Source> &sources,
                       const OpticsConfig &cfg, Matrix2 &epi) {
  const int half = (cfg.theta_u - 1) / 2;
  const double inv2s2 = 1.0 / (2.0 * cfg.psf_sigma * cfg.psf_sigma);
  for (const Source &s : sources) {
    const double slope = cfg.slope_per_um * s.z_um;
    for (int u = 0; u < cfg.theta_u; ++u) {
      const double center = s.x0 + slope * (u - half);
      double *row = epi.row(u);
      for (int x = 0; x < cfg.n_x; ++x) {
        const double d = x - center;
        row[x] += s.amplitude * std::exp(-d * d * inv2s2);
      }
    }
  }
}

void add_clipped_noise(std::vector<double> &data, double sigma, Rng &rng) {
  if (sigma > 0.0) {
    for (double &v : data)
      v = std::max(0.0, v + sigma * rng.normal());
  }
}

} // namespace

Matrix2 render_epi(const std::vector<Source> &sources, const OpticsConfig &cfg,
                   double noise_sigma, std::uint64_t seed) {
  cfg.validate();
  check_sources(sources, cfg);
  if (noise_sigma < 0.0)
    throw ConfigError("render_epi: noise_sigma must be >= 0");
  Matrix2 epi(cfg.theta_u, cfg.n_x);
  render_epi_signal(sources, cfg, epi);
  Rng rng(splitmix64(seed));
  add_clipped_noise(epi.data, noise_sigma, rng);
  return epi;
}

LightField4D render_lightfield(const std::vector<Source> &sources,
                               const OpticsConfig &cfg, double noise_sigma,
                               std::uint64_t seed) {
  cfg.validate();
  check_sources(sources, cfg);
  if (noise_sigma < 0.0)
    throw ConfigError("render_lightfield: noise_sigma must be >= 0");

  LightField4D lf(cfg.theta_u, cfg.theta_v, cfg.n_x, cfg.n_y);
  const int half_u = (cfg.theta_u - 1) / 2;
  const int half_v = (cfg.theta_v - 1) / 2;
  const double inv2s2 = 1.0 / (2.0 * cfg.psf_sigma * cfg.psf_sigma);

  Matrix2 gx(cfg.theta_u, cfg.n_x);
  Matrix2 gy(cfg.theta_v, cfg.n_y);
  for (const Source &s : sources) {
    const double slope = cfg.slope_per_um * s.z_um;
    for (int u = 0; u < cfg.theta_u; ++u) {
      const double cx = s.x0 + slope * (u - half_u);
      for (int x = 0; x < cfg.n_x; ++x) {
        const double d = x - cx;
        gx(u, x) = std::exp(-d * d * inv2s2);
      }
    }
    for (int v = 0; v < cfg.theta_v; ++v) {
      const double cy = s.y0 + slope * (v - half_v);
      for (int y = 0; y < cfg.n_y; ++y) {
        const double d = y - cy;
        gy(v, y) = std::exp(-d * d * inv2s2);
      }
    }
    for (int u = 0; u < cfg.theta_u; ++u)
      for (int v = 0; v < cfg.theta_v; ++v)
        for (int x = 0; x < cfg.n_x; ++x) {
          const double ax = s.amplitude * gx(u, x);
          double *dst = &lf.at(u, v, x, 0);
          const double *gy_row = gy.row(v);
          for (int y = 0; y < cfg.n_y; ++y)
            dst[y] += ax * gy_row[y];
        }
  }

  Rng rng(splitmix64(seed));
  add_clipped_noise(lf.data, noise_sigma, rng);
  return lf;
}

Matrix2 render_central_view(const std::vector<Source> &sources,
                            const OpticsConfig &cfg, double noise_sigma,
                            std::uint64_t seed) {
  cfg.validate();
  check_sources(sources, cfg);
  if (noise_sigma < 0.0)
    throw ConfigError("render_central_view: noise_sigma must be >= 0");

  Matrix2 view(cfg.n_x, cfg.n_y);
  const double inv2s2 = 1.0 / (2.0 * cfg.psf_sigma * cfg.psf_sigma);
  for (const Source &s : sources)
    for (int x = 0; x < cfg.n_x; ++x) {
      const double dx = x - s.x0;
      const double ax = s.amplitude * std::exp(-dx * dx * inv2s2);
      double *row = view.row(x);
      for (int y = 0; y < cfg.n_y; ++y) {
        const double dy = y - s.y0;
        row[y] += ax * std::exp(-dy * dy * inv2s2);
      }
    }

  Rng rng(splitmix64(seed));
  add_clipped_noise(view.data, noise_sigma, rng);
  return view;
}

EpiDictionary build_dictionary(const OpticsConfig &cfg, int atom_theta,
                               int atom_n) {
  cfg.validate();
  if (atom_theta < 1 || atom_n < 1 || atom_theta % 2 == 0 || atom_n % 2 == 0)
    throw ConfigError("build_dictionary: atom dimensions must be odd and >= 1");
  if (atom_theta > cfg.theta_u || atom_n > cfg.n_x)
    throw ConfigError("build_dictionary: atom larger than the EPI");

  const std::vector<double> grid = cfg.depth_grid();
  EpiDictionary dict;
  dict.atoms = ChannelStack(cfg.depth_count, atom_theta, atom_n);
  dict.depth_um = grid;

  const int row_off = (cfg.theta_u - atom_theta) / 2;
  const int col_off = (cfg.n_x - atom_n) / 2;
  const double center_x = (cfg.n_x - 1) / 2.0;
  for (int m = 0; m < cfg.depth_count; ++m) {
    Matrix2 epi(cfg.theta_u, cfg.n_x);
    render_epi_signal({Source{center_x, 0.0, grid[m], 1.0}}, cfg, epi);
    double *atom = dict.atoms.channel(m);
    double norm2 = 0.0;
    for (int a = 0; a < atom_theta; ++a)
      for (int b = 0; b < atom_n; ++b) {
        const double v = epi(row_off + a, col_off + b);
        atom[static_cast<std::size_t>(a) * atom_n + b] = v;
        norm2 += v * v;
      }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t idx = 0; idx < dict.atoms.channel_size(); ++idx)
      atom[idx] *= inv;
  }
  return dict;
}

std::vector<double> make_soft_label(const std::vector<int> &depth_indices,
                                    double sigma_label, int m) {
  if (sigma_label < 0.0)
    throw ConfigError("make_soft_label: sigma_label must be >= 0");
  std::vector<double> label(m, 0.0);
  for (int idx : depth_indices) {
    if (idx < 0 || idx >= m)
      throw RangeError("make_soft_label: depth index out of range");
    if (sigma_label == 0.0) {
      label[idx] = 1.0;
      continue;
    }
    const double inv2s2 = 1.0 / (2.0 * sigma_label * sigma_label);
    for (int j = 0; j < m; ++j) {
      const double d = j - idx;
      label[j] = std::max(label[j], std::exp(-d * d * inv2s2));
    }
  }
  return label;
}

OpticsConfig DatasetHeader::optics() const {
  OpticsConfig cfg;
  cfg.theta_u = cfg.theta_v = theta;
  cfg.n_x = cfg.n_y = n;
  cfg.slope_per_um = kappa;
  cfg.psf_sigma = psf_sigma;
  cfg.depth_min_um = depth_min;
  cfg.depth_max_um = depth_max;
  cfg.depth_count = m;
  return cfg;
}

namespace {

void check_gen_options(const OpticsConfig &cfg, const DatasetGenOptions &opts) {
  cfg.validate();
  if (opts.count < 1)
    throw ConfigError("generate_dataset: count must be >= 1");
  if (opts.sources_min < 0 || opts.sources_min > opts.sources_max)
    throw ConfigError("generate_dataset: need 0 <= sources_min <= sources_max");
  if (opts.sources_max > cfg.depth_count)
    throw ConfigError("generate_dataset: sources_max exceeds depth_count "
                      "(distinct depth indices are required)");
  if (opts.noise_sigma < 0.0 || opts.sigma_label < 0.0)
    throw ConfigError("generate_dataset: sigmas must be >= 0");
}

constexpr char kDatasetMagic[] = "EPIDS1\n";
constexpr char kDictMagic[] = "EPIDC1\n";
constexpr char kEpiMagic[] = "EPIEP1\n";
constexpr char kCodesMagic[] = "EPIZS1\n";

} // namespace

LabeledSample make_sample(const OpticsConfig &cfg, const DatasetGenOptions &opts,
                          std::uint64_t index) {
  check_gen_options(cfg, opts);
  Rng rng(stream_seed(opts.seed, index));

  // Draw order is a format contract: source count, depth indices, per-source
  // x0, shared y0, then noise. Noiseless regeneration reuses the prefix.
  const int n_src =
      static_cast<int>(rng.uniform_int(opts.sources_min, opts.sources_max));

  std::vector<int> depth_idx;
  depth_idx.reserve(n_src);
  while (static_cast<int>(depth_idx.size()) < n_src) {
    const int idx = static_cast<int>(rng.uniform_int(0, cfg.depth_count - 1));
    if (std::find(depth_idx.begin(), depth_idx.end(), idx) == depth_idx.end())
      depth_idx.push_back(idx);
  }

  const std::vector<double> grid = cfg.depth_grid();
  const double margin = cfg.lateral_margin();
  LabeledSample sample;
  sample.sources.reserve(n_src);
  for (int s = 0; s < n_src; ++s) {
    Source src;
    src.x0 = rng.uniform(margin, cfg.n_x - margin);
    src.z_um = grid[depth_idx[s]];
    src.amplitude = 1.0;
    sample.sources.push_back(src);
  }
  if (n_src > 0) {
    const double margin_y = std::min(margin, cfg.n_y / 2.0 - 0.5);
    const double y0 = rng.uniform(margin_y, cfg.n_y - margin_y);
    for (Source &src : sample.sources)
      src.y0 = y0; // sources of one sample share the EPI's row
  }

  sample.label = make_soft_label(depth_idx, opts.sigma_label, cfg.depth_count);
  sample.epi = Matrix2(cfg.theta_u, cfg.n_x);
  render_epi_signal(sample.sources, cfg, sample.epi);
  add_clipped_noise(sample.epi.data, opts.noise_sigma, rng);
  return sample;
}

namespace {

void write_sample(std::ostream &os, const LabeledSample &s) {
  binio::write_f32(os, s.epi.data.data(), s.epi.size());
  binio::write_f32(os, s.label.data(), s.label.size());
  binio::write_u32(os, static_cast<std::uint32_t>(s.sources.size()));
  for (const Source &src : s.sources) {
    const double fields[4] = {src.x0, src.y0, src.z_um, src.amplitude};
    binio::write_f32(os, fields, 4);
  }
}

} // namespace

DatasetHeader generate_dataset(const OpticsConfig &cfg,
                               const DatasetGenOptions &opts,
                               const std::string &out_path) {
  check_gen_options(cfg, opts);

  DatasetHeader header;
  header.count = opts.count;
  header.m = cfg.depth_count;
  header.theta = cfg.theta_u;
  header.n = cfg.n_x;
  header.seed = opts.seed;
  header.noise_sigma = opts.noise_sigma;
  header.sigma_label = opts.sigma_label;
  header.depth_min = cfg.depth_min_um;
  header.depth_max = cfg.depth_max_um;
  header.kappa = cfg.slope_per_um;
  header.psf_sigma = cfg.psf_sigma;

  std::ofstream os = binio::open_output(out_path);
  binio::write_magic_and_header(
      os, kDatasetMagic,
      {{"version", binio::format_u64(header.version)},
       {"count", binio::format_u64(header.count)},
       {"m", binio::format_u64(header.m)},
       {"theta", binio::format_u64(header.theta)},
       {"n", binio::format_u64(header.n)},
       {"seed", binio::format_u64(header.seed)},
       {"noise_sigma", binio::format_double(header.noise_sigma)},
       {"sigma_label", binio::format_double(header.sigma_label)},
       {"depth_min", binio::format_double(header.depth_min)},
       {"depth_max", binio::format_double(header.depth_max)},
       {"kappa", binio::format_double(header.kappa)},
       {"psf_sigma", binio::format_double(header.psf_sigma)}});

  // Samples are generated in parallel chunks (each depends only on its
  // index) and written strictly in index order.
  constexpr std::uint64_t kChunk = 256;
  std::vector<LabeledSample> buffer;
  for (std::uint64_t base = 0; base < opts.count; base += kChunk) {
    const std::uint64_t take = std::min(kChunk, opts.count - base);
    buffer.assign(take, LabeledSample{});
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(take); ++i)
      buffer[i] = make_sample(cfg, opts, base + i);
    for (const LabeledSample &s : buffer)
      write_sample(os, s);
  }
  if (!os)
    throw IoError("generate_dataset: write failed for '" + out_path + "'");
  return header;
}

struct DatasetReader::Impl {
  std::ifstream is;
  std::uint64_t next_index = 0;
};

DatasetReader::DatasetReader(const std::string &path)
    : impl_(new Impl{binio::open_input(path), 0}) {
  auto fields = binio::read_magic_and_header(impl_->is, kDatasetMagic, "dataset");
  const std::int64_t version =
      binio::parse_i64(binio::require_key(fields, "version", "dataset"));
  if (version != 1)
    throw VersionMismatchError("dataset: unsupported version " +
                               std::to_string(version));
  header_.version = static_cast<int>(version);
  header_.count = binio::parse_u64(binio::require_key(fields, "count", "dataset"));
  header_.m = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "m", "dataset")));
  header_.theta = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "theta", "dataset")));
  header_.n = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "n", "dataset")));
  header_.seed = binio::parse_u64(binio::require_key(fields, "seed", "dataset"));
  header_.noise_sigma =
      binio::parse_double(binio::require_key(fields, "noise_sigma", "dataset"));
  header_.sigma_label =
      binio::parse_double(binio::require_key(fields, "sigma_label", "dataset"));
  header_.depth_min =
      binio::parse_double(binio::require_key(fields, "depth_min", "dataset"));
  header_.depth_max =
      binio::parse_double(binio::require_key(fields, "depth_max", "dataset"));
  header_.kappa = binio::parse_double(binio::require_key(fields, "kappa", "dataset"));
  header_.psf_sigma =
      binio::parse_double(binio::require_key(fields, "psf_sigma", "dataset"));
  if (header_.m < 1 || header_.theta < 1 || header_.n < 1)
    throw ShapeMismatchError("dataset: non-positive dimensions in header");
}

DatasetReader::~DatasetReader() { delete impl_; }

LabeledSample DatasetReader::next() {
  if (impl_->next_index >= header_.count)
    throw RangeError("dataset: read past the last sample");
  LabeledSample s;
  s.epi = Matrix2(header_.theta, header_.n);
  binio::read_f32(impl_->is, s.epi.data.data(), s.epi.size(), "dataset");
  s.label.assign(header_.m, 0.0);
  binio::read_f32(impl_->is, s.label.data(), s.label.size(), "dataset");
  const std::uint32_t n_src = binio::read_u32(impl_->is, "dataset");
  s.sources.resize(n_src);
  for (std::uint32_t i = 0; i < n_src; ++i) {
    double fields[4];
    binio::read_f32(impl_->is, fields, 4, "dataset");
    s.sources[i] = Source{fields[0], fields[1], fields[2], fields[3]};
  }
  ++impl_->next_index;
  return s;
}

std::vector<LabeledSample> DatasetReader::read_all() {
  std::vector<LabeledSample> all;
  all.reserve(header_.count);
  while (impl_->next_index < header_.count)
    all.push_back(next());
  return all;
}

void save_dictionary(const EpiDictionary &dict, const OpticsConfig &cfg,
                     int atom_theta, int atom_n, const std::string &path) {
  if (dict.atoms.rows != atom_theta || dict.atoms.cols != atom_n ||
      dict.atoms.channels != static_cast<int>(dict.depth_um.size()))
    throw DimensionError("save_dictionary: inconsistent dictionary");
  std::ofstream os = binio::open_output(path);
  binio::write_magic_and_header(
      os, kDictMagic,
      {{"version", "1"},
       {"m", binio::format_u64(dict.atoms.channels)},
       {"atom_theta", binio::format_u64(atom_theta)},
       {"atom_n", binio::format_u64(atom_n)},
       {"depth_min", binio::format_double(cfg.depth_min_um)},
       {"depth_max", binio::format_double(cfg.depth_max_um)},
       {"kappa", binio::format_double(cfg.slope_per_um)},
       {"psf_sigma", binio::format_double(cfg.psf_sigma)}});
  binio::write_f32(os, dict.atoms.data.data(), dict.atoms.size());
  if (!os)
    throw IoError("save_dictionary: write failed for '" + path + "'");
}

EpiDictionary load_dictionary(const std::string &path, OpticsConfig *cfg_out) {
  std::ifstream is = binio::open_input(path);
  auto fields = binio::read_magic_and_header(is, kDictMagic, "dictionary");
  if (binio::parse_i64(binio::require_key(fields, "version", "dictionary")) != 1)
    throw VersionMismatchError("dictionary: unsupported version");
  const int m = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "m", "dictionary")));
  const int atom_theta = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "atom_theta", "dictionary")));
  const int atom_n = static_cast<int>(
      binio::parse_i64(binio::require_key(fields, "atom_n", "dictionary")));
  const double depth_min =
      binio::parse_double(binio::require_key(fields, "depth_min", "dictionary"));
  const double depth_max =
      binio::parse_double(binio::require_key(fields, "depth_max", "dictionary"));
  if (m < 1 || atom_theta < 1 || atom_n < 1)
    throw ShapeMismatchError("dictionary: non-positive dimensions in header");

  EpiDictionary dict;
  dict.atoms = ChannelStack(m, atom_theta, atom_n);
  binio::read_f32(is, dict.atoms.data.data(), dict.atoms.size(), "dictionary");
  dict.depth_um.resize(m);
  const double step = m > 1 ? (depth_max - depth_min) / (m - 1) : 0.0;
  for (int i = 0; i < m; ++i)
    dict.depth_um[i] = depth_min + i * step;

  if (cfg_out) {
    cfg_out->depth_min_um = depth_min;
    cfg_out->depth_max_um = depth_max;
    cfg_out->depth_count = m;
    cfg_out->slope_per_um =
        binio::parse_double(binio::require_key(fields, "kappa", "dictionary"));
    cfg_out->psf_sigma =
        binio::parse_double(binio::require_key(fields, "psf_sigma", "dictionary"));
  }
  return dict;
}

void save_epi(const Matrix2 &epi, const std::string &path) {
  std::ofstream os = binio::open_output(path);
  binio::write_magic_and_header(os, kEpiMagic,
                                {{"version", "1"},
                                 {"theta", binio::format_u64(epi.rows)},
                                 {"n", binio::format_u64(epi.cols)}});
  binio::write_f32(os, epi.data.data(), epi.size());
  if (!os)
    throw IoError("save_epi: write failed for '" + path + "'");
}

Matrix2 load_epi(const std::string &path) {
  std::ifstream is = binio::open_input(path);
  auto fields = binio::read_magic_and_header(is, kEpiMagic, "epi");
  if (binio::parse_i64(binio::require_key(fields, "version", "epi")) != 1)
    throw VersionMismatchError("epi: unsupported version");
  const int theta =
      static_cast<int>(binio::parse_i64(binio::require_key(fields, "theta", "epi")));
  const int n =
      static_cast<int>(binio::parse_i64(binio::require_key(fields, "n", "epi")));
  if (theta < 1 || n < 1)
    throw ShapeMismatchError("epi: non-positive dimensions in header");
  Matrix2 epi(theta, n);
  binio::read_f32(is, epi.data.data(), epi.size(), "epi");
  return epi;
}

void save_code_stack(const ChannelStack &z, const std::string &path) {
  std::ofstream os = binio::open_output(path);
  binio::write_magic_and_header(os, kCodesMagic,
                                {{"version", "1"},
                                 {"m", binio::format_u64(z.channels)},
                                 {"theta", binio::format_u64(z.rows)},
                                 {"n", binio::format_u64(z.cols)}});
  binio::write_f32(os, z.data.data(), z.size());
  if (!os)
    throw IoError("save_code_stack: write failed for '" + path + "'");
}

ChannelStack load_code_stack(const std::string &path) {
  std::ifstream is = binio::open_input(path);
  auto fields = binio::read_magic_and_header(is, kCodesMagic, "codes");
  if (binio::parse_i64(binio::require_key(fields, "version", "codes")) != 1)
    throw VersionMismatchError("codes: unsupported version");
  const int m =
      static_cast<int>(binio::parse_i64(binio::require_key(fields, "m", "codes")));
  const int theta =
      static_cast<int>(binio::parse_i64(binio::require_key(fields, "theta", "codes")));
  const int n =
      static_cast<int>(binio::parse_i64(binio::require_key(fields, "n", "codes")));
  if (m < 1 || theta < 1 || n < 1)
    throw ShapeMismatchError("codes: non-positive dimensions in header");
  ChannelStack z(m, theta, n);
  binio::read_f32(is, z.data.data(), z.size(), "codes");
  return z;
}

} // namespace epiloc
