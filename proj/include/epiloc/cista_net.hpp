#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epiloc/conv_ops.hpp"
#include "epiloc/types.hpp"

namespace epiloc {

// Unrolled-ISTA network. Each block computes
//   Z <- ReLU(Z - depthwise_corr(Z, S) + perchannel_corr(x, W) - bias)
// (bias_sign = +1 flips the bias term for ablation), followed by a global
// max pool, a fully connected M x M head and a sigmoid. Gradients are
// hand-derived reverse mode; training is ADAM on mean binary cross-entropy
// against soft labels.

struct NetArchitecture {
  int m = 55;
  int theta = 19;
  int n = 63;
  std::vector<int> kernel_sizes = {3, 5, 7, 9, 11, 13}; // non-decreasing, odd
  double depth_min_um = -18.0;
  double depth_max_um = 36.0;

  int layer_count() const { return static_cast<int>(kernel_sizes.size()); }
  void validate() const;
  std::vector<double> depth_grid() const;
};

struct LayerParams {
  ChannelStack s_filters; // M x k x k, depthwise
  ChannelStack w_filters; // M x k x k, applied to the single-channel input
  std::vector<double> bias; // length M, kept >= 0 by projection
};

struct HeadParams {
  Matrix2 weights; // M x M
  std::vector<double> bias;
};

struct CistaNetParams {
  NetArchitecture arch;
  std::vector<LayerParams> layers;
  HeadParams head;
};

/// Same shapes as `p`, all values zero (gradient / moment buffers).
CistaNetParams zero_like(const CistaNetParams &p);

/// Exact trainable-parameter count of an architecture:
/// sum_i (2*M*k_i^2 + M) + M^2 + M.
std::size_t parameter_count(const NetArchitecture &arch);

/// Named view over every parameter tensor in serialization order
/// (per layer: s_filters, w_filters, bias; then head.weights, head.bias).
struct TensorRef {
  std::string name;
  double *data;
  std::vector<std::uint32_t> dims;
  std::size_t size;
};
std::vector<TensorRef> tensor_refs(CistaNetParams &p);

/// Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, biases 0.01. With a
/// dictionary, each layer's w_filters channel m becomes the center-embedded
/// atom m scaled by the ISTA step size, so the first injection stage starts
/// as a matched filter bank.
CistaNetParams init_params(const NetArchitecture &arch, std::uint64_t seed,
                           const EpiDictionary *init_dict = nullptr);

struct ForwardCache {
  Matrix2 x;
  std::vector<ChannelStack> layer_in; // Z^i entering layer i (layer 0: zeros)
  std::vector<ChannelStack> pre_act;  // pre-ReLU values per layer
  MaxPoolResult pool;                 // over the final activations
  std::vector<double> logits;
  std::vector<double> probs;
  int bias_sign = -1;
  const CistaNetParams *owner = nullptr;
};

ForwardCache forward(const Matrix2 &x, const CistaNetParams &p,
                     int bias_sign = -1);

/// Forward without cache retention; returns the per-depth probabilities.
std::vector<double> infer(const Matrix2 &x, const CistaNetParams &p,
                          int bias_sign = -1);

/// Mean binary cross-entropy, fused with the sigmoid: takes logits, never
/// materializes the log of a saturated probability.
double bce_loss(const std::vector<double> &logits,
                const std::vector<double> &label);

/// Exact gradients for every parameter tensor. The pooled gradient is routed
/// solely to the cached row-major-first argmax; ReLU uses subgradient 0 at 0.
CistaNetParams backward(const CistaNetParams &p, const ForwardCache &cache,
                        const std::vector<double> &label);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  CistaNetParams first_moment;
  CistaNetParams second_moment;
  std::int64_t step = 0;
};
AdamState make_adam_state(const CistaNetParams &p);

/// Bias-corrected ADAM update on one flat tensor (t is the 1-based step).
void adam_update(double *param, const double *grad, double *m, double *v,
                 std::size_t count, std::int64_t t, const AdamOptions &opts);

/// Full-network ADAM step; afterwards every layer bias is clamped to >= 0.
void adam_step(CistaNetParams &params, const CistaNetParams &grads,
               AdamState &state, const AdamOptions &opts);

struct TrainHyper {
  int epochs = 100;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int bias_sign = -1;
  bool single_thread = false;
};

struct TrainingReport {
  std::vector<double> train_loss; // per epoch
  std::vector<double> val_loss;   // per epoch
  int best_epoch = 0;             // 1-based; 0 when epochs == 0
  double best_val_loss = 0.0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
};

/// Trains on a dataset file and saves the best-validation parameters to
/// out_model_path. Per-epoch losses are also written as CSV (loss_csv_path,
/// or out_model_path + ".loss.csv" when empty).
TrainingReport train(const std::string &dataset_path,
                     const NetArchitecture &arch, const TrainHyper &hyper,
                     const std::string &out_model_path,
                     const EpiDictionary *init_dict = nullptr,
                     const std::string &loss_csv_path = "");

void save_model(const CistaNetParams &params, const std::string &path);
CistaNetParams load_model(const std::string &path);

} // namespace epiloc
