#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "epiloc/rng.hpp"
#include "epiloc/synth_data.hpp"

using namespace epiloc;

namespace {

std::string slurp(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string &name) : path("/tmp/epiloc_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("optics validation and depth grid") {
  OpticsConfig cfg; // defaults: 19x63, -18..36 um, 55 depths
  cfg.validate();
  const auto grid = cfg.depth_grid();
  REQUIRE(grid.size() == 55);
  CHECK(grid.front() == doctest::Approx(-18.0));
  CHECK(grid.back() == doctest::Approx(36.0));
  CHECK(grid[1] - grid[0] == doctest::Approx(1.0));

  OpticsConfig bad = cfg;
  bad.theta_u = 18;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.slope_per_um = 1.0; // lines leave the frame
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("epi_slope: zero at focus, odd in z, arithmetic") {
  OpticsConfig cfg;
  CHECK(epi_slope(0.0, cfg) == 0.0);
  CHECK(epi_slope(12.0, cfg) == doctest::Approx(-epi_slope(-12.0, cfg)));
  CHECK(epi_slope(36.0, cfg) == doctest::Approx(0.9));
  CHECK_THROWS_AS(epi_slope(100.0, cfg), RangeError);
}

TEST_CASE("render_epi: empty, in-focus argmax, sloped-line argmax") {
  OpticsConfig cfg;
  const Matrix2 empty = render_epi({}, cfg, 0.0, 0);
  for (double v : empty.data)
    CHECK(v == 0.0);

  const Source focus{30.3, 5.0, 0.0, 1.0};
  const Matrix2 flat = render_epi({focus}, cfg, 0.0, 0);
  for (int u = 0; u < cfg.theta_u; ++u) {
    int arg = 0;
    for (int x = 1; x < cfg.n_x; ++x)
      if (flat(u, x) > flat(u, arg))
        arg = x;
    CHECK(arg == 30); // round(30.3)
  }

  // kappa=0.025, z=20 -> slope 0.5; top angular row sits at +9 steps.
  const Source deep{20.2, 5.0, 20.0, 1.0};
  const Matrix2 sloped = render_epi({deep}, cfg, 0.0, 0);
  const int top = cfg.theta_u - 1;
  int arg = 0;
  for (int x = 1; x < cfg.n_x; ++x)
    if (sloped(top, x) > sloped(top, arg))
      arg = x;
  CHECK(arg == static_cast<int>(std::lround(20.2 + 4.5)));

  // Linearity in amplitude (noiseless).
  const Source twice{20.2, 5.0, 20.0, 2.0};
  const Matrix2 doubled = render_epi({twice}, cfg, 0.0, 0);
  for (std::size_t i = 0; i < doubled.size(); ++i)
    CHECK(doubled.data[i] == doctest::Approx(2.0 * sloped.data[i]).epsilon(1e-12));

  // Noise is deterministic given the seed and clipped at zero.
  const Matrix2 n1 = render_epi({focus}, cfg, 0.3, 99);
  const Matrix2 n2 = render_epi({focus}, cfg, 0.3, 99);
  CHECK(n1.data == n2.data);
  for (double v : n1.data)
    CHECK(v >= 0.0);
}

TEST_CASE("render_lightfield: empty field, central peak, cross-path EPI") {
  OpticsConfig cfg;
  cfg.theta_u = cfg.theta_v = 9;
  cfg.n_x = cfg.n_y = 41;
  cfg.depth_min_um = -10;
  cfg.depth_max_um = 10;
  cfg.depth_count = 21;
  cfg.slope_per_um = 0.05;

  const LightField4D zero = render_lightfield({}, cfg, 0.0, 0);
  for (double v : zero.data)
    CHECK(v == 0.0);

  const Source src{17.0, 23.0, 6.0, 1.0};
  const LightField4D lf = render_lightfield({src}, cfg, 0.0, 0);
  const Matrix2 view = central_view(lf);
  int bx = 0, by = 0;
  double best = -1;
  for (int x = 0; x < view.rows; ++x)
    for (int y = 0; y < view.cols; ++y)
      if (view(x, y) > best) {
        best = view(x, y);
        bx = x;
        by = y;
      }
  CHECK(bx == 17);
  CHECK(by == 23);

  const Matrix2 resliced = extract_epi(lf, 23, (cfg.theta_v - 1) / 2);
  const Matrix2 direct = render_epi({src}, cfg, 0.0, 0);
  for (std::size_t i = 0; i < direct.size(); ++i)
    CHECK(resliced.data[i] == doctest::Approx(direct.data[i]).epsilon(1e-6));

  const Matrix2 fast_view = render_central_view({src}, cfg, 0.0, 0);
  for (std::size_t i = 0; i < view.size(); ++i)
    CHECK(fast_view.data[i] == doctest::Approx(view.data[i]).epsilon(1e-12));
}

TEST_CASE("build_dictionary: unit norms, focus symmetry, coherence decay") {
  OpticsConfig cfg;
  cfg.depth_min_um = -18;
  cfg.depth_max_um = 36;
  cfg.depth_count = 55;
  const int atom_theta = 19, atom_n = 31;
  const EpiDictionary dict = build_dictionary(cfg, atom_theta, atom_n);
  REQUIRE(dict.atoms.channels == 55);

  for (int m = 0; m < dict.atoms.channels; ++m) {
    double norm2 = 0.0;
    const double *atom = dict.atoms.channel(m);
    for (std::size_t i = 0; i < dict.atoms.channel_size(); ++i)
      norm2 += atom[i] * atom[i];
    CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-12));
  }

  // z = 0 sits at grid index 18; its atom is symmetric under angular flip.
  const int focus_idx = 18;
  CHECK(dict.depth_um[focus_idx] == doctest::Approx(0.0));
  const double *focus = dict.atoms.channel(focus_idx);
  for (int a = 0; a < atom_theta; ++a)
    for (int b = 0; b < atom_n; ++b)
      CHECK(focus[a * atom_n + b] ==
            doctest::Approx(focus[(atom_theta - 1 - a) * atom_n + b]).epsilon(1e-12));

  // Coherence decays with depth distance.
  auto inner = [&](int p, int q) {
    double s = 0.0;
    for (std::size_t i = 0; i < dict.atoms.channel_size(); ++i)
      s += dict.atoms.channel(p)[i] * dict.atoms.channel(q)[i];
    return s;
  };
  for (int m = 10; m < 45; ++m)
    CHECK(inner(m, m + 1) > inner(m, m + 10));

  CHECK_THROWS_AS(build_dictionary(cfg, 21, 31), ConfigError); // atom taller than EPI
}

TEST_CASE("make_soft_label: hard label, Gaussian values, max combination") {
  const auto hard = make_soft_label({2}, 0.0, 5);
  CHECK(hard == std::vector<double>{0, 0, 1, 0, 0});

  const auto soft = make_soft_label({2}, 1.0, 5);
  CHECK(soft[0] == doctest::Approx(std::exp(-2.0)));
  CHECK(soft[1] == doctest::Approx(std::exp(-0.5)));
  CHECK(soft[2] == doctest::Approx(1.0));
  CHECK(soft[3] == doctest::Approx(std::exp(-0.5)));
  CHECK(soft[4] == doctest::Approx(std::exp(-2.0)));

  const auto a = make_soft_label({1}, 1.0, 5);
  const auto b = make_soft_label({3}, 1.0, 5);
  const auto both = make_soft_label({1, 3}, 1.0, 5);
  for (int i = 0; i < 5; ++i)
    CHECK(both[i] == doctest::Approx(std::max(a[i], b[i])));

  CHECK_THROWS_AS(make_soft_label({7}, 1.0, 5), RangeError);
}

TEST_CASE("generate_dataset: determinism, zero-source labels, round trip") {
  OpticsConfig cfg;
  cfg.theta_u = cfg.theta_v = 9;
  cfg.n_x = cfg.n_y = 41;
  cfg.depth_min_um = -10;
  cfg.depth_max_um = 10;
  cfg.depth_count = 21;
  cfg.slope_per_um = 0.05;

  DatasetGenOptions opts;
  opts.count = 5;
  opts.sources_min = 1;
  opts.sources_max = 2;
  opts.noise_sigma = 0.05;
  opts.sigma_label = 1.5;
  opts.seed = 2024;

  TempFile f1("ds1.bin"), f2("ds2.bin");
  generate_dataset(cfg, opts, f1.path);
  generate_dataset(cfg, opts, f2.path);
  CHECK(slurp(f1.path) == slurp(f2.path)); // byte-identical

  DatasetReader reader(f1.path);
  CHECK(reader.header().count == 5);
  CHECK(reader.header().m == 21);
  CHECK(reader.header().theta == 9);
  CHECK(reader.header().n == 41);
  const auto samples = reader.read_all();
  REQUIRE(samples.size() == 5);
  for (const auto &s : samples) {
    CHECK(s.epi.rows == 9);
    CHECK(s.epi.cols == 41);
    REQUIRE(!s.sources.empty());
    CHECK(s.sources.size() <= 2);
    double label_max = 0.0;
    for (double v : s.label) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      label_max = std::max(label_max, v);
    }
    CHECK(label_max == doctest::Approx(1.0));
  }

  // Sample regeneration by index matches the file (f32 quantization aside).
  const LabeledSample again = make_sample(cfg, opts, 3);
  for (std::size_t i = 0; i < again.epi.size(); ++i)
    CHECK(static_cast<float>(again.epi.data[i]) ==
          doctest::Approx(samples[3].epi.data[i]).epsilon(1e-7));

  DatasetGenOptions none = opts;
  none.sources_min = none.sources_max = 0;
  TempFile f3("ds3.bin");
  generate_dataset(cfg, none, f3.path);
  DatasetReader r3(f3.path);
  for (const auto &s : r3.read_all()) {
    CHECK(s.sources.empty());
    for (double v : s.label)
      CHECK(v == 0.0);
  }
}

TEST_CASE("noiseless regeneration shares the sources of the noisy sample") {
  OpticsConfig cfg;
  cfg.theta_u = cfg.theta_v = 9;
  cfg.n_x = cfg.n_y = 41;
  cfg.depth_min_um = -10;
  cfg.depth_max_um = 10;
  cfg.depth_count = 21;
  cfg.slope_per_um = 0.05;
  DatasetGenOptions opts;
  opts.count = 4;
  opts.seed = 7;
  opts.noise_sigma = 0.1;
  DatasetGenOptions clean = opts;
  clean.noise_sigma = 0.0;
  for (std::uint64_t i = 0; i < opts.count; ++i) {
    const LabeledSample noisy = make_sample(cfg, opts, i);
    const LabeledSample pure = make_sample(cfg, clean, i);
    REQUIRE(noisy.sources.size() == pure.sources.size());
    for (std::size_t s = 0; s < noisy.sources.size(); ++s) {
      CHECK(noisy.sources[s].x0 == pure.sources[s].x0);
      CHECK(noisy.sources[s].y0 == pure.sources[s].y0);
      CHECK(noisy.sources[s].z_um == pure.sources[s].z_um);
    }
  }
}

TEST_CASE("depth indices drawn uniformly over the grid (chi-square)") {
  OpticsConfig cfg;
  cfg.theta_u = cfg.theta_v = 7;
  cfg.n_x = cfg.n_y = 41;
  cfg.depth_min_um = -5;
  cfg.depth_max_um = 5;
  cfg.depth_count = 11;
  cfg.slope_per_um = 0.04;
  DatasetGenOptions opts;
  opts.count = 1000;
  opts.sources_min = opts.sources_max = 1;
  opts.noise_sigma = 0.0;
  opts.seed = 31337;

  std::vector<int> hist(cfg.depth_count, 0);
  const auto grid = cfg.depth_grid();
  for (std::uint64_t i = 0; i < opts.count; ++i) {
    const LabeledSample s = make_sample(cfg, opts, i);
    REQUIRE(s.sources.size() == 1);
    int idx = -1;
    for (int m = 0; m < cfg.depth_count; ++m)
      if (std::abs(grid[m] - s.sources[0].z_um) < 1e-9)
        idx = m;
    REQUIRE(idx >= 0);
    ++hist[idx];
  }
  const double expect = 1000.0 / cfg.depth_count;
  const double sigma = std::sqrt(1000.0 * (1.0 / cfg.depth_count) *
                                 (1.0 - 1.0 / cfg.depth_count));
  for (int count : hist)
    CHECK(std::abs(count - expect) <= 3.0 * sigma);
}

TEST_CASE("dictionary and EPI containers round-trip; bad files rejected") {
  OpticsConfig cfg;
  cfg.depth_count = 7;
  cfg.depth_min_um = -3;
  cfg.depth_max_um = 3;
  const EpiDictionary dict = build_dictionary(cfg, 9, 15);
  TempFile fd("dict.bin");
  save_dictionary(dict, cfg, 9, 15, fd.path);
  OpticsConfig loaded_cfg;
  const EpiDictionary loaded = load_dictionary(fd.path, &loaded_cfg);
  CHECK(loaded.atoms.channels == 7);
  CHECK(loaded.atoms.rows == 9);
  CHECK(loaded.atoms.cols == 15);
  CHECK(loaded_cfg.slope_per_um == doctest::Approx(cfg.slope_per_um));
  for (int m = 0; m < 7; ++m)
    CHECK(loaded.depth_um[m] == doctest::Approx(dict.depth_um[m]));
  for (std::size_t i = 0; i < dict.atoms.size(); ++i)
    CHECK(loaded.atoms.data[i] ==
          doctest::Approx(static_cast<float>(dict.atoms.data[i])));

  Matrix2 epi(5, 9);
  for (std::size_t i = 0; i < epi.size(); ++i)
    epi.data[i] = static_cast<double>(i) * 0.25;
  TempFile fe("epi.bin");
  save_epi(epi, fe.path);
  const Matrix2 back = load_epi(fe.path);
  CHECK(back.rows == 5);
  CHECK(back.cols == 9);
  for (std::size_t i = 0; i < epi.size(); ++i)
    CHECK(back.data[i] == epi.data[i]);

  // Corrupt the magic.
  {
    std::string bytes = slurp(fe.path);
    bytes[0] = 'X';
    std::ofstream os(fe.path, std::ios::binary | std::ios::trunc);
    os << bytes;
  }
  CHECK_THROWS_AS(load_epi(fe.path), BadMagicError);

  CHECK_THROWS_AS(DatasetReader("/nonexistent/nowhere.bin"), IoError);
}
