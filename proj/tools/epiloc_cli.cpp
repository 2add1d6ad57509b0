// epiloc: synthetic light-field EPI depth localization toolkit.
//
// Subcommands: gen-data, build-dict, solve, train, infer, eval, bench,
// selftest. Every numeric default is overridable by flag; --config reads the
// same keys from a key=value file with flags taking precedence. Exit codes:
// 0 success, 1 usage error, 2 I/O error, 3 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "epiloc/cista_net.hpp"
#include "epiloc/conv_ops.hpp"
#include "epiloc/csc_ista.hpp"
#include "epiloc/eval.hpp"
#include "epiloc/lf_model.hpp"
#include "epiloc/rng.hpp"
#include "epiloc/selftest.hpp"
#include "epiloc/synth_data.hpp"

namespace {

using namespace epiloc;

struct OpticsFlags {
  int theta = 19;
  int n = 63;
  double kappa = 0.025;
  double psf_sigma = 1.0;
  double depth_min = -18.0;
  double depth_max = 36.0;
  int m = 55;

  void attach(CLI::App *cmd) {
    cmd->add_option("--theta", theta, "Angular samples (odd)")
        ->capture_default_str();
    cmd->add_option("--n", n, "Spatial samples per axis")->capture_default_str();
    cmd->add_option("--kappa", kappa, "EPI slope per micrometer of depth")
        ->capture_default_str();
    cmd->add_option("--psf-sigma", psf_sigma, "PSF sigma in pixels")
        ->capture_default_str();
    cmd->add_option("--depth-min", depth_min, "Depth grid start (um)")
        ->capture_default_str();
    cmd->add_option("--depth-max", depth_max, "Depth grid end (um)")
        ->capture_default_str();
    cmd->add_option("--m", m, "Number of depth-grid entries")
        ->capture_default_str();
  }

  OpticsConfig config() const {
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
};

struct SolverFlags {
  double lambda = -1.0; // <0: use lambda_rel
  double lambda_rel = 0.1;
  int max_iters = 200;
  double rel_tol = 1e-6;
  std::string gamma = "auto";

  void attach(CLI::App *cmd) {
    cmd->add_option("--lambda", lambda,
                    "Absolute sparsity weight (overrides --lambda-rel)");
    cmd->add_option("--lambda-rel", lambda_rel,
                    "Sparsity weight as a fraction of max |D^T x|")
        ->capture_default_str();
    cmd->add_option("--max-iters", max_iters, "ISTA iteration cap")
        ->capture_default_str();
    cmd->add_option("--rel-tol", rel_tol, "Relative objective-decrease stop")
        ->capture_default_str();
    cmd->add_option("--gamma", gamma, "Step size ('auto' = 0.99/L)")
        ->capture_default_str();
  }

  SolverOptions options(const Matrix2 &x, const EpiDictionary &dict) const {
    SolverOptions opts;
    opts.max_iters = max_iters;
    opts.rel_tol = rel_tol;
    if (gamma != "auto")
      opts.step_gamma = std::stod(gamma);
    if (lambda >= 0.0) {
      opts.lambda = lambda;
    } else {
      double peak = 0.0;
      const ChannelStack corr = dict_adjoint(x, dict.atoms);
      for (double v : corr.data)
        peak = std::max(peak, std::abs(v));
      opts.lambda = lambda_rel * peak;
    }
    return opts;
  }
};

struct ReadoutFlags {
  double tau = 0.5;     // absolute threshold on network probabilities
  double tau_rel = 0.1; // CSC evidence threshold as a fraction of its max
  int min_separation = 3;
  int centroid_radius = 2;

  void attach(CLI::App *cmd) {
    cmd->add_option("--tau", tau, "Peak threshold on network probabilities")
        ->capture_default_str();
    cmd->add_option("--tau-rel", tau_rel,
                    "Peak threshold on CSC evidence, relative to its maximum")
        ->capture_default_str();
    cmd->add_option("--min-separation", min_separation,
                    "Peak suppression distance in grid steps")
        ->capture_default_str();
    cmd->add_option("--centroid-radius", centroid_radius,
                    "Half-width of the centroid refinement window")
        ->capture_default_str();
  }

  DepthReadoutOptions for_probs() const {
    return {tau, min_separation, centroid_radius};
  }
  DepthReadoutOptions for_evidence(const std::vector<double> &ev) const {
    double peak = 0.0;
    for (double v : ev)
      peak = std::max(peak, v);
    return {tau_rel * peak, min_separation, centroid_radius};
  }
};

int parse_bias_sign(const std::string &s) {
  if (s == "-" || s == "-1")
    return -1;
  if (s == "+" || s == "+1" || s == "1")
    return +1;
  throw ConfigError("--bias-sign must be '-' or '+'");
}

// --config support: key=value lines become --key=value tokens inserted right
// after the subcommand name, so explicit command-line flags (parsed later
// under a take-last policy) override the file.
std::string g_config_path; // shared storage; one subcommand runs per process

void setup_config(CLI::App *cmd) {
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", g_config_path,
                  "Key=value file with defaults for this subcommand; "
                  "explicit flags win");
}

std::vector<std::string> expand_config_args(int argc, char **argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.size() < 2)
    return args;
  std::string config_path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(9);
  }
  if (config_path.empty())
    return args;

  std::ifstream is(config_path);
  if (!is)
    throw IoError("cannot open config file '" + config_path + "'");
  std::vector<std::string> expanded = {args[0], args[1]};
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos)
      continue;
    line = line.substr(start);
    if (line.empty() || line[0] == '#' || line[0] == ';')
      continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file line is not key=value: '" + line + "'");
    expanded.push_back("--" + line.substr(0, eq) + "=" + line.substr(eq + 1));
  }
  expanded.insert(expanded.end(), args.begin() + 2, args.end());
  return expanded;
}

Matrix2 load_input_epi(const std::string &epi_path, const std::string &dataset_path,
                       std::int64_t index) {
  if (!epi_path.empty())
    return load_epi(epi_path);
  if (dataset_path.empty())
    throw ConfigError("need --epi or --dataset/--index");
  DatasetReader reader(dataset_path);
  if (index < 0 || static_cast<std::uint64_t>(index) >= reader.header().count)
    throw ConfigError("--index out of range for this dataset");
  LabeledSample s;
  for (std::int64_t i = 0; i <= index; ++i)
    s = reader.next();
  return s.epi;
}

void print_depths(const std::vector<DepthDetection> &hits) {
  for (const DepthDetection &d : hits)
    std::printf("%.6f\n", d.depth_um);
}

// ---------------------------------------------------------------------------
// eval: localize every sample with the chosen methods, write the per-sample
// report and print one summary line per method.
// ---------------------------------------------------------------------------

struct EvalFlags {
  std::string dataset, model, dict, out;
  double gate_um = 3.0;
  double gate_px = 3.0;
  double lateral_rel_threshold = 0.5;
  int lateral_min_separation = 3;
  std::string bias_sign = "-";
  SolverFlags solver;
  ReadoutFlags readout;
};

struct MethodEval {
  std::string name;
  std::vector<RmseSummary> depth_parts;
};

int run_eval(const EvalFlags &flags) {
  DatasetReader reader(flags.dataset);
  const DatasetHeader header = reader.header();
  const OpticsConfig optics = header.optics();
  const std::vector<LabeledSample> samples = reader.read_all();
  const std::vector<double> grid = optics.depth_grid();
  const int bias_sign = parse_bias_sign(flags.bias_sign);

  std::optional<CistaNetParams> model;
  if (!flags.model.empty()) {
    model = load_model(flags.model);
    if (model->arch.m != header.m || model->arch.theta != header.theta ||
        model->arch.n != header.n)
      throw ConfigError("eval: model architecture does not match the dataset");
  }
  std::optional<EpiDictionary> dict;
  if (!flags.dict.empty())
    dict = load_dictionary(flags.dict);
  if (!model && !dict)
    throw ConfigError("eval: need --model and/or --dict");

  std::ofstream csv;
  if (!flags.out.empty()) {
    csv.open(flags.out, std::ios::trunc);
    if (!csv)
      throw IoError("eval: cannot write '" + flags.out + "'");
    csv << "sample,method,pred_x,pred_y,pred_z_um,true_x,true_y,true_z_um\n";
  }

  std::vector<MethodEval> methods;
  if (model)
    methods.push_back({"cista-net", {}});
  if (dict)
    methods.push_back({"csc", {}});
  std::vector<RmseSummary> lateral_parts;

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample &s = samples[i];

    // Shared lateral stage on the rendered central view.
    const Matrix2 view =
        render_central_view(s.sources, optics, header.noise_sigma,
                            stream_seed(header.seed ^ 0x1A7E6A1ull, i));
    double view_peak = 0.0;
    for (double v : view.data)
      view_peak = std::max(view_peak, v);
    const std::vector<LateralDetection> lateral = detect_lateral(
        view, flags.lateral_rel_threshold * view_peak, flags.lateral_min_separation);
    {
      RmseSummary lat;
      std::vector<char> used(s.sources.size(), 0);
      struct Cand {
        double dist;
        int d, t;
      };
      std::vector<Cand> cands;
      for (int dI = 0; dI < static_cast<int>(lateral.size()); ++dI)
        for (int tI = 0; tI < static_cast<int>(s.sources.size()); ++tI) {
          const double dx = lateral[dI].x - s.sources[tI].x0;
          const double dy = lateral[dI].y - s.sources[tI].y0;
          const double dist = std::hypot(dx, dy);
          if (dist <= flags.gate_px)
            cands.push_back({dist, dI, tI});
        }
      std::sort(cands.begin(), cands.end(),
                [](const Cand &a, const Cand &b) { return a.dist < b.dist; });
      std::vector<char> d_used(lateral.size(), 0);
      for (const Cand &c : cands) {
        if (d_used[c.d] || used[c.t])
          continue;
        d_used[c.d] = used[c.t] = 1;
        ++lat.matched;
        const double dx = lateral[c.d].x - s.sources[c.t].x0;
        const double dy = lateral[c.d].y - s.sources[c.t].y0;
        lat.sse_x += dx * dx;
        lat.sse_y += dy * dy;
      }
      for (char u : d_used)
        if (!u)
          ++lat.spurious;
      for (char u : used)
        if (!u)
          ++lat.missed;
      lateral_parts.push_back(lat);
    }

    std::vector<Point3> truth;
    for (const Source &src : s.sources)
      truth.push_back({src.x0, src.y0, src.z_um});

    for (MethodEval &method : methods) {
      std::vector<DepthDetection> hits;
      if (method.name == "cista-net") {
        const std::vector<double> probs = infer(s.epi, *model, bias_sign);
        hits = detect_depths(probs, grid, flags.readout.for_probs());
      } else {
        const SolverOptions opts = flags.solver.options(s.epi, *dict);
        const auto [codes, trace] = solve(s.epi, *dict, opts);
        const std::vector<double> evidence = code_evidence(codes);
        hits = detect_depths(evidence, dict->depth_um,
                             flags.readout.for_evidence(evidence));
      }

      // Rank-pair depth detections with lateral detections to form (x,y,z)
      // predictions; both lists are sorted by descending strength.
      std::vector<Point3> pred;
      for (std::size_t k = 0; k < hits.size(); ++k) {
        Point3 p;
        p.z = hits[k].depth_um;
        if (k < lateral.size()) {
          p.x = lateral[k].x;
          p.y = lateral[k].y;
        } else if (!lateral.empty()) {
          p.x = lateral[0].x;
          p.y = lateral[0].y;
        }
        pred.push_back(p);
      }
      const RmseSummary depth_stats = match_and_rmse(pred, truth, flags.gate_um);
      method.depth_parts.push_back(depth_stats);

      if (csv.is_open()) {
        // Re-derive the matched pairs for the per-sample rows.
        for (const Point3 &p : pred) {
          const Source *best = nullptr;
          double best_d = flags.gate_um;
          for (const Source &src : s.sources) {
            const double d = std::abs(p.z - src.z_um);
            if (d <= best_d) {
              best_d = d;
              best = &src;
            }
          }
          csv << i << ',' << method.name << ',' << p.x << ',' << p.y << ','
              << p.z << ',';
          if (best)
            csv << best->x0 << ',' << best->y0 << ',' << best->z_um << '\n';
          else
            csv << ",,\n";
        }
      }
    }
  }

  const RmseSummary lat = pool_summaries(lateral_parts);
  for (const MethodEval &method : methods) {
    const RmseSummary depth = pool_summaries(method.depth_parts);
    std::printf("method=%s samples=%zu z_matched=%d z_missed=%d z_spurious=%d "
                "rmse_x_px=%.4f rmse_y_px=%.4f rmse_z_um=%.4f\n",
                method.name.c_str(), samples.size(), depth.matched, depth.missed,
                depth.spurious, lat.rmse_x, lat.rmse_y, depth.rmse_z);
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Synthetic light-field EPI depth localization: convolutional "
               "sparse coding baseline and an unrolled-ISTA network"};
  app.require_subcommand(1);

  // ---- gen-data --------------------------------------------------------
  auto *gen = app.add_subcommand("gen-data", "Generate a labeled EPI dataset");
  setup_config(gen);
  OpticsFlags gen_optics;
  gen_optics.attach(gen);
  std::string gen_out, gen_epi_dir;
  DatasetGenOptions gen_opts;
  gen->add_option("--out", gen_out, "Output dataset file")->required();
  gen->add_option("--count", gen_opts.count, "Sample count")->capture_default_str();
  gen->add_option("--sources-min", gen_opts.sources_min, "Min sources per EPI")
      ->capture_default_str();
  gen->add_option("--sources-max", gen_opts.sources_max, "Max sources per EPI")
      ->capture_default_str();
  gen->add_option("--noise-sigma", gen_opts.noise_sigma, "Additive noise sigma")
      ->capture_default_str();
  gen->add_option("--sigma-label", gen_opts.sigma_label,
                  "Soft-label Gaussian width in grid steps")
      ->capture_default_str();
  gen->add_option("--seed", gen_opts.seed, "Master seed")->capture_default_str();
  gen->add_option("--epi-dir", gen_epi_dir,
                  "Also write each EPI as a standalone file into this directory");

  // ---- build-dict ------------------------------------------------------
  auto *bdict = app.add_subcommand("build-dict", "Build the per-depth EPI dictionary");
  setup_config(bdict);
  OpticsFlags dict_optics;
  dict_optics.attach(bdict);
  std::string dict_out;
  int atom_theta = 19, atom_n = 31;
  bdict->add_option("--out", dict_out, "Output dictionary file")->required();
  bdict->add_option("--atom-theta", atom_theta, "Atom angular size (odd)")
      ->capture_default_str();
  bdict->add_option("--atom-n", atom_n, "Atom spatial size (odd)")
      ->capture_default_str();

  // ---- solve -----------------------------------------------------------
  auto *solve_cmd = app.add_subcommand(
      "solve", "Convolutional ISTA on one EPI; prints detected depths");
  setup_config(solve_cmd);
  std::string solve_dict, solve_epi, solve_dataset, solve_codes_out, solve_trace_out;
  std::int64_t solve_index = 0;
  SolverFlags solve_solver;
  ReadoutFlags solve_readout;
  solve_cmd->add_option("--dict", solve_dict, "Dictionary file")->required();
  solve_cmd->add_option("--epi", solve_epi, "Standalone EPI file");
  solve_cmd->add_option("--dataset", solve_dataset, "Dataset file");
  solve_cmd->add_option("--index", solve_index, "Sample index within --dataset")
      ->capture_default_str();
  solve_solver.attach(solve_cmd);
  solve_readout.attach(solve_cmd);
  solve_cmd->add_option("--codes-out", solve_codes_out, "Write the code stack here");
  solve_cmd->add_option("--trace-out", solve_trace_out,
                        "Write per-iteration objective values as CSV");

  // ---- train -----------------------------------------------------------
  auto *train_cmd = app.add_subcommand("train", "Train the unrolled network");
  setup_config(train_cmd);
  std::string train_dataset, train_out, train_init_dict, train_loss_csv;
  std::string train_kernels = "3,5,7,9,11,13";
  std::string train_bias_sign = "-";
  TrainHyper hyper;
  train_cmd->add_option("--dataset", train_dataset, "Training dataset")->required();
  train_cmd->add_option("--out", train_out, "Output model file")->required();
  train_cmd->add_option("--epochs", hyper.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch", hyper.batch, "Mini-batch size")
      ->capture_default_str();
  train_cmd->add_option("--lr", hyper.lr, "ADAM learning rate")
      ->capture_default_str();
  train_cmd->add_option("--seed", hyper.seed, "Seed for init, split and shuffles")
      ->capture_default_str();
  train_cmd->add_option("--val-fraction", hyper.val_fraction,
                        "Held-out validation fraction")
      ->capture_default_str();
  train_cmd->add_option("--kernels", train_kernels,
                        "Comma-separated non-decreasing odd kernel sizes")
      ->capture_default_str();
  train_cmd
      ->add_option("--bias-sign", train_bias_sign,
                   "Bias term sign in each block: '-' (default) or '+'")
      ->capture_default_str();
  train_cmd->add_flag("--single-thread", hyper.single_thread,
                      "Pin training to one thread");
  train_cmd->add_option("--init-dict", train_init_dict,
                        "Dictionary file for matched-filter initialization");
  train_cmd->add_option("--loss-csv", train_loss_csv,
                        "Per-epoch loss CSV (default: <out>.loss.csv)");

  // ---- infer -----------------------------------------------------------
  auto *infer_cmd =
      app.add_subcommand("infer", "Network inference; prints depths in um");
  setup_config(infer_cmd);
  std::string infer_model, infer_epi, infer_dataset, infer_probs_out;
  std::string infer_bias_sign = "-";
  std::int64_t infer_index = 0;
  ReadoutFlags infer_readout;
  infer_cmd->add_option("--model", infer_model, "Model file")->required();
  infer_cmd->add_option("--epi", infer_epi, "Standalone EPI file");
  infer_cmd->add_option("--dataset", infer_dataset, "Dataset file");
  infer_cmd->add_option("--index", infer_index, "Sample index within --dataset")
      ->capture_default_str();
  infer_readout.attach(infer_cmd);
  infer_cmd->add_option("--bias-sign", infer_bias_sign, "Bias sign used in training")
      ->capture_default_str();
  infer_cmd->add_option("--probs-out", infer_probs_out,
                        "Write the raw per-depth probabilities as CSV");

  // ---- eval ------------------------------------------------------------
  auto *eval_cmd = app.add_subcommand(
      "eval", "Localization metrics for the network and/or CSC baseline");
  setup_config(eval_cmd);
  EvalFlags eval_flags;
  eval_cmd->add_option("--dataset", eval_flags.dataset, "Labeled dataset")
      ->required();
  eval_cmd->add_option("--model", eval_flags.model, "Model file (cista-net)");
  eval_cmd->add_option("--dict", eval_flags.dict, "Dictionary file (CSC)");
  eval_cmd->add_option("--out", eval_flags.out, "Per-sample report CSV");
  eval_cmd->add_option("--gate-um", eval_flags.gate_um, "Depth matching gate")
      ->capture_default_str();
  eval_cmd->add_option("--gate-px", eval_flags.gate_px, "Lateral matching gate")
      ->capture_default_str();
  eval_cmd
      ->add_option("--lateral-threshold-rel", eval_flags.lateral_rel_threshold,
                   "Lateral detection threshold relative to the view maximum")
      ->capture_default_str();
  eval_cmd
      ->add_option("--lateral-min-separation", eval_flags.lateral_min_separation,
                   "Lateral suppression radius in pixels")
      ->capture_default_str();
  eval_cmd->add_option("--bias-sign", eval_flags.bias_sign, "Bias sign of the model")
      ->capture_default_str();
  eval_flags.solver.attach(eval_cmd);
  eval_flags.readout.attach(eval_cmd);

  // ---- bench -----------------------------------------------------------
  auto *bench_cmd = app.add_subcommand(
      "bench", "Per-EPI wall-clock comparison of csc-solve and cista-infer");
  setup_config(bench_cmd);
  std::string bench_model, bench_dict, bench_dataset, bench_out = "bench.csv";
  int bench_repeats = 5, bench_n_epis = 10;
  std::string bench_bias_sign = "-";
  SolverFlags bench_solver;
  bench_cmd->add_option("--model", bench_model, "Model file")->required();
  bench_cmd->add_option("--dict", bench_dict, "Dictionary file")->required();
  bench_cmd->add_option("--dataset", bench_dataset, "EPI source dataset")
      ->required();
  bench_cmd->add_option("--repeats", bench_repeats, "Timing repeats (>= 3)")
      ->capture_default_str();
  bench_cmd->add_option("--n-epis", bench_n_epis, "EPIs per timing pass")
      ->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "Timing CSV path")
      ->capture_default_str();
  bench_cmd->add_option("--bias-sign", bench_bias_sign, "Bias sign of the model")
      ->capture_default_str();
  bench_solver.attach(bench_cmd);

  // ---- selftest --------------------------------------------------------
  auto *selftest_cmd =
      app.add_subcommand("selftest", "Adjoint, gradient and descent checks");
  std::uint64_t selftest_seed = 0;
  selftest_cmd->add_option("--seed", selftest_seed, "Seed")->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config_args(argc, argv);
  } catch (const IoError &e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 2;
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::vector<char *> argv2;
  argv2.reserve(args.size());
  for (std::string &a : args)
    argv2.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv2.size()), argv2.data());
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) // --help
      return app.exit(e);
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) {
      const OpticsConfig cfg = gen_optics.config();
      generate_dataset(cfg, gen_opts, gen_out);
      if (!gen_epi_dir.empty()) {
        std::filesystem::create_directories(gen_epi_dir);
        DatasetReader reader(gen_out);
        char name[64];
        for (std::uint64_t i = 0; i < reader.header().count; ++i) {
          const LabeledSample s = reader.next();
          std::snprintf(name, sizeof(name), "/epi_%06llu.bin",
                        static_cast<unsigned long long>(i));
          save_epi(s.epi, gen_epi_dir + name);
        }
      }
      std::fprintf(stderr, "wrote %llu samples to %s\n",
                   static_cast<unsigned long long>(gen_opts.count),
                   gen_out.c_str());
    } else if (*bdict) {
      const OpticsConfig cfg = dict_optics.config();
      const EpiDictionary dict = build_dictionary(cfg, atom_theta, atom_n);
      save_dictionary(dict, cfg, atom_theta, atom_n, dict_out);
      std::fprintf(stderr, "wrote %d atoms to %s\n", dict.atoms.channels,
                   dict_out.c_str());
    } else if (*solve_cmd) {
      const EpiDictionary dict = load_dictionary(solve_dict);
      const Matrix2 x = load_input_epi(solve_epi, solve_dataset, solve_index);
      const SolverOptions opts = solve_solver.options(x, dict);
      const auto [codes, trace] = solve(x, dict, opts);
      if (!solve_codes_out.empty())
        save_code_stack(codes, solve_codes_out);
      if (!solve_trace_out.empty()) {
        std::ofstream tr(solve_trace_out, std::ios::trunc);
        if (!tr)
          throw IoError("solve: cannot write '" + solve_trace_out + "'");
        tr << "iteration,objective\n";
        for (std::size_t i = 0; i < trace.objective.size(); ++i)
          tr << i << ',' << trace.objective[i] << '\n';
      }
      const std::vector<double> evidence = code_evidence(codes);
      print_depths(detect_depths(evidence, dict.depth_um,
                                 solve_readout.for_evidence(evidence)));
      std::fprintf(stderr, "iterations=%d converged=%d gamma=%g lambda=%g\n",
                   trace.iterations, trace.converged ? 1 : 0, trace.gamma,
                   opts.lambda);
    } else if (*train_cmd) {
      DatasetReader reader(train_dataset);
      NetArchitecture arch;
      arch.m = reader.header().m;
      arch.theta = reader.header().theta;
      arch.n = reader.header().n;
      arch.depth_min_um = reader.header().depth_min;
      arch.depth_max_um = reader.header().depth_max;
      arch.kernel_sizes.clear();
      std::stringstream ks(train_kernels);
      std::string tok;
      while (std::getline(ks, tok, ','))
        arch.kernel_sizes.push_back(std::stoi(tok));
      hyper.bias_sign = parse_bias_sign(train_bias_sign);

      std::optional<EpiDictionary> init_dict;
      if (!train_init_dict.empty())
        init_dict = load_dictionary(train_init_dict);
      const TrainingReport report =
          train(train_dataset, arch, hyper, train_out,
                init_dict ? &*init_dict : nullptr, train_loss_csv);
      std::fprintf(stderr,
                   "trained %d epochs on %zu samples (val %zu); best val loss "
                   "%.6f at epoch %d; model: %s\n",
                   hyper.epochs, report.train_samples, report.val_samples,
                   report.best_val_loss, report.best_epoch, train_out.c_str());
    } else if (*infer_cmd) {
      const CistaNetParams model = load_model(infer_model);
      const Matrix2 x = load_input_epi(infer_epi, infer_dataset, infer_index);
      const std::vector<double> probs =
          infer(x, model, parse_bias_sign(infer_bias_sign));
      if (!infer_probs_out.empty()) {
        std::ofstream os(infer_probs_out, std::ios::trunc);
        if (!os)
          throw IoError("infer: cannot write '" + infer_probs_out + "'");
        os << "index,depth_um,probability\n";
        const std::vector<double> grid = model.arch.depth_grid();
        for (std::size_t i = 0; i < probs.size(); ++i)
          os << i << ',' << grid[i] << ',' << probs[i] << '\n';
      }
      print_depths(
          detect_depths(probs, model.arch.depth_grid(), infer_readout.for_probs()));
    } else if (*eval_cmd) {
      return run_eval(eval_flags);
    } else if (*bench_cmd) {
      const CistaNetParams model = load_model(bench_model);
      const EpiDictionary dict = load_dictionary(bench_dict);
      DatasetReader reader(bench_dataset);
      std::vector<Matrix2> epis;
      const std::uint64_t take =
          std::min<std::uint64_t>(bench_n_epis, reader.header().count);
      for (std::uint64_t i = 0; i < take; ++i)
        epis.push_back(reader.next().epi);
      SolverOptions opts = bench_solver.options(epis.front(), dict);
      const std::vector<BenchRow> rows =
          bench(model, dict, epis, bench_repeats, opts,
                parse_bias_sign(bench_bias_sign));
      write_bench_csv(rows, bench_out);
      for (const BenchRow &r : rows)
        std::printf("%s: median %.6g s/EPI (mad %.2g), speedup vs csc %.1fx\n",
                    r.method.c_str(), r.median_s, r.mad_s, r.speedup_vs_csc);
    } else if (*selftest_cmd) {
      bool all = true;
      for (const SelftestResult &r : run_selftests(selftest_seed)) {
        std::printf("[%s] %s: %s\n", r.passed ? "PASS" : "FAIL",
                    r.suite.c_str(), r.detail.c_str());
        all = all && r.passed;
      }
      return all ? 0 : 3;
    }
  } catch (const IoError &e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 2;
  } catch (const NumericalError &e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
