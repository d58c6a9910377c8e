#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace squeal::kernels {

// Single-layer LSTM (gates i, f, g, o) with either a scalar head reading the
// hidden state at the last real step (dense ReLU, then dense sigmoid) or a
// per-step dense sigmoid head. Parameters are one flat column-major vector:
//   W [4H x m], U [4H x H], b [4H], then
//   scalar: W1 [D x H], b1 [D], W2 [1 x D], b2 [1]
//   sequence: wy [1 x H], by [1]
struct NetShape {
  std::size_t inputs = 8;
  std::size_t units = 64;
  std::size_t dense = 64;
  std::size_t steps = 200;
  bool sequence = false;

  std::size_t lstm_params() const { return 4 * units * (inputs + units + 1); }
  std::size_t head_params() const { return sequence ? units + 1 : dense * units + 2 * dense + 1; }
  std::size_t n_params() const { return lstm_params() + head_params(); }
  std::size_t outputs() const { return sequence ? steps : 1; }
  // Dropout mask length per sample.
  std::size_t keep_len() const { return sequence ? steps * units : units; }
};

// One window: x is [steps x inputs] row-major, y holds outputs() labels and
// keep an optional dropout mask over the LSTM outputs.
struct Sample {
  const double* x = nullptr;
  const std::uint8_t* y = nullptr;
  std::size_t real = 0;
  const std::uint8_t* keep = nullptr;
};

struct BatchResult {
  double loss = 0.0;        // summed BCE over unmasked positions
  std::size_t count = 0;    // number of unmasked positions
  std::vector<double> grad; // gradient of the summed loss
  std::vector<double> prob; // [n x outputs()], zero past each sample's real length
};

inline constexpr double kBceEps = 1e-7;
inline constexpr std::size_t kChunk = 32;

// Per-sample reference, accumulated in sample order.
BatchResult loss_grad_serial(const NetShape& shape, std::span<const double> theta,
                             std::span<const Sample> batch, double keep_scale);

// Fixed chunks of kChunk samples run as batched GEMMs over OpenMP threads and
// are reduced in chunk order, so the result does not depend on the thread
// count. Agrees with the serial reference to round-off.
BatchResult loss_grad_omp(const NetShape& shape, std::span<const double> theta,
                          std::span<const Sample> batch, double keep_scale);

// Summed loss of the serial reference evaluated in long double, dropout off.
long double loss_extended(const NetShape& shape, std::span<const double> theta, std::span<const Sample> batch,
                          std::size_t& count);

// Inference only (dropout off); [n x outputs()] probabilities.
std::vector<double> forward_serial(const NetShape& shape, std::span<const double> theta,
                                   std::span<const Sample> batch);
std::vector<double> forward_omp(const NetShape& shape, std::span<const double> theta,
                                std::span<const Sample> batch);

}  // namespace squeal::kernels
