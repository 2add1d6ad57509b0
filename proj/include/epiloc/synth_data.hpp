#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epiloc/lf_model.hpp"
#include "epiloc/types.hpp"

namespace epiloc {

/// Parametric imaging geometry: a point source at depth z traces a line in
/// the EPI whose slope is kappa * z pixels of spatial shift per angular
/// step, blurred by a Gaussian PSF.
struct OpticsConfig {
  int theta_u = 19;
  int theta_v = 19;
  int n_x = 63;
  int n_y = 63;
  double slope_per_um = 0.025; // kappa
  double psf_sigma = 1.0;      // pixels
  double depth_min_um = -18.0;
  double depth_max_um = 36.0;
  int depth_count = 55; // M

  void validate() const; // throws ConfigError
  std::vector<double> depth_grid() const;
  /// Margin such that every in-range line plus 3 sigma of PSF stays in frame.
  double lateral_margin() const;
};

struct Source {
  double x0 = 0.0;
  double y0 = 0.0;
  double z_um = 0.0;
  double amplitude = 1.0;
};

/// Spatial shift per angular step for a source at depth z (kappa * z).
double epi_slope(double z_um, const OpticsConfig &cfg);

/// Sum of Gaussian-blurred source lines plus zero-clipped Gaussian noise;
/// deterministic given seed.
Matrix2 render_epi(const std::vector<Source> &sources, const OpticsConfig &cfg,
                   double noise_sigma, std::uint64_t seed);

/// Separable 4D model: a * G(x - (x0 + s*u)) * G(y - (y0 + s*v)) per source,
/// angular offsets measured from the central view.
LightField4D render_lightfield(const std::vector<Source> &sources,
                               const OpticsConfig &cfg, double noise_sigma,
                               std::uint64_t seed);

/// Central sub-aperture view rendered directly (slope drops out at the
/// central angles, leaving one Gaussian spot per source).
Matrix2 render_central_view(const std::vector<Source> &sources,
                            const OpticsConfig &cfg, double noise_sigma,
                            std::uint64_t seed);

/// One unit-norm atom per depth-grid entry, rendered noiselessly at the
/// atom's spatial center and cropped to atom_theta x atom_n.
EpiDictionary build_dictionary(const OpticsConfig &cfg, int atom_theta,
                               int atom_n);

/// Gaussian bump of width sigma_label at each true depth index, combined by
/// elementwise max; sigma_label = 0 gives exact one-hot labels.
std::vector<double> make_soft_label(const std::vector<int> &depth_indices,
                                    double sigma_label, int m);

struct DatasetHeader {
  int version = 1;
  std::uint64_t count = 0;
  int m = 0;
  int theta = 0;
  int n = 0;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  double sigma_label = 0.0;
  double depth_min = 0.0;
  double depth_max = 0.0;
  double kappa = 0.0;
  double psf_sigma = 0.0;

  OpticsConfig optics() const; // square-in-angle/space reconstruction
};

struct LabeledSample {
  Matrix2 epi;
  std::vector<double> label;
  std::vector<Source> sources;
};

struct DatasetGenOptions {
  std::uint64_t count = 1;
  int sources_min = 1;
  int sources_max = 1;
  double noise_sigma = 0.05;
  double sigma_label = 1.5; // grid steps
  std::uint64_t seed = 0;
};

/// Sample `index` of the dataset defined by (cfg, opts). Depends only on
/// (opts.seed, index): source draws precede noise draws on one per-index
/// stream, so the noiseless variant of a sample shares its sources.
LabeledSample make_sample(const OpticsConfig &cfg, const DatasetGenOptions &opts,
                          std::uint64_t index);

/// Writes `opts.count` samples to out_path and returns the header.
DatasetHeader generate_dataset(const OpticsConfig &cfg,
                               const DatasetGenOptions &opts,
                               const std::string &out_path);

/// Streaming reader over a dataset file.
class DatasetReader {
public:
  explicit DatasetReader(const std::string &path);
  ~DatasetReader();
  DatasetReader(const DatasetReader &) = delete;
  DatasetReader &operator=(const DatasetReader &) = delete;

  const DatasetHeader &header() const { return header_; }
  LabeledSample next();
  std::vector<LabeledSample> read_all();

private:
  struct Impl;
  Impl *impl_;
  DatasetHeader header_;
};

void save_dictionary(const EpiDictionary &dict, const OpticsConfig &cfg,
                     int atom_theta, int atom_n, const std::string &path);
EpiDictionary load_dictionary(const std::string &path,
                              OpticsConfig *cfg_out = nullptr);

/// Standalone single-EPI container (magic EPIEP1).
void save_epi(const Matrix2 &epi, const std::string &path);
Matrix2 load_epi(const std::string &path);

/// Sparse-code stack container (magic EPIZS1).
void save_code_stack(const ChannelStack &z, const std::string &path);
ChannelStack load_code_stack(const std::string &path);

} // namespace epiloc
