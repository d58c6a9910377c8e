#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "squeal/io.hpp"
#include "squeal/kernels/lstm_kernels.hpp"
#include "squeal/preproc.hpp"

namespace squeal {

struct ModelConfig {
  TargetMode mode = TargetMode::Scalar;
  std::size_t n_inputs = kLoadChannels;
  std::size_t n_units = 256;
  std::size_t dense_units = 0;  // scalar head width; 0 means n_units
  double dropout = 0.1;         // on LSTM outputs only
  WindowSpec window{200, 150};

  /// "paper": 256 units, w = 200 (scalar) or 400 (sequence), h = 0.75 w.
  /// "desk": the same with 64 units.
  static ModelConfig preset(const std::string& name, TargetMode mode);
  kernels::NetShape shape() const;
  std::size_t n_params() const { return shape().n_params(); }
  void validate() const;
};

json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);

struct Model {
  ModelConfig config;
  std::vector<double> theta;
  ChannelStats stats;  // normalisation the model was trained with
  std::uint64_t seed = 0;
};

/// Glorot-uniform input and dense kernels, orthogonal recurrent kernel, zero
/// biases except the forget gate (1).
Model init_model(const ModelConfig& cfg, std::uint64_t seed);

struct LstmState {
  Eigen::VectorXd h, c;
};

/// Hidden states [steps x n_units] of the LSTM layer for a row-major
/// [steps x n_inputs] input, starting from zero or the given state.
Eigen::MatrixXd lstm_forward(const ModelConfig& cfg, std::span<const double> theta, const double* inputs,
                             std::size_t steps, const LstmState* initial = nullptr);

/// Inference on one normalized window; 1 or w probabilities (zero past real).
std::vector<double> model_forward(const Model& model, const double* window, std::size_t real);

/// Mean BCE over positions with mask != 0; p is clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> p, std::span<const std::uint8_t> y, std::span<const std::uint8_t> mask);

/// Kernel samples for windows of ds; throws when the dataset does not fit the model.
std::vector<kernels::Sample> make_batch(const ModelConfig& cfg, const WindowedDataset& ds,
                                        std::span<const std::size_t> windows);

struct Gradient {
  double loss = 0.0;  // mean over unmasked positions
  std::vector<double> grad;
};

/// Gradient of the mean batch loss. keep masks in the samples (if any) are
/// applied with scale 1 / (1 - dropout).
Gradient backward(const Model& model, std::span<const kernels::Sample> batch);

struct GradCheckOptions {
  std::size_t batch = 3;
  double step = 1e-5;
  bool head_only = false;
};

struct GradCheckResult {
  bool skipped = false;  // dropout makes the graph stochastic
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
};

/// Analytic gradients against central differences on every parameter of a
/// random model and random batch drawn from seed.
GradCheckResult gradient_check(const ModelConfig& cfg, std::uint64_t seed, const GradCheckOptions& opt = {});

/// <stem>.bin holds the float64 parameters; <stem>.json the manifest.
void save_model(const std::filesystem::path& stem, const Model& model, const json& extra = json::object());
Model load_model(const std::filesystem::path& stem);

}  // namespace squeal
