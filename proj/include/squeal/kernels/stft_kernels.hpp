#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace squeal::kernels {

// One-sided power spectra of tapered frames, row-major [n_frames x (N/2 + 1)].
// Bin k holds c_k |X_k|^2 / (sum w)^2 with c_k = 2 except at DC and Nyquist,
// i.e. the mean-square of a sinusoid centred on that bin.
std::vector<double> frame_power_spectra_serial(std::span<const double> signal,
                                               std::span<const double> window,
                                               std::size_t hop);

// Same contract, frames distributed over OpenMP threads. Output is
// bit-identical to the serial reference.
std::vector<double> frame_power_spectra_omp(std::span<const double> signal,
                                            std::span<const double> window,
                                            std::size_t hop);

}  // namespace squeal::kernels
