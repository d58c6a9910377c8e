#include "squeal/kernels/stft_kernels.hpp"

#include <omp.h>

#include <complex>
#include <numeric>

#include "fft.hpp"
#include "squeal/signal.hpp"

namespace squeal::kernels {
namespace {

struct FrameScratch {
  explicit FrameScratch(std::size_t n) : fft(n), tapered(n), spectrum(fft.bins()) {}
  detail::RealFft fft;
  std::vector<double> tapered;
  std::vector<std::complex<double>> spectrum;
};

void frame_power(std::span<const double> signal, std::span<const double> window,
                 std::size_t start, double norm, FrameScratch& s, double* out) {
  const std::size_t n = window.size();
  for (std::size_t i = 0; i < n; ++i) s.tapered[i] = signal[start + i] * window[i];
  s.fft.forward(s.tapered, s.spectrum);
  const std::size_t bins = s.fft.bins();
  for (std::size_t k = 0; k < bins; ++k) {
    const double c = (k == 0 || (n % 2 == 0 && k == bins - 1)) ? 1.0 : 2.0;
    out[k] = c * std::norm(s.spectrum[k]) * norm;
  }
}

void check_args(std::span<const double> signal, std::span<const double> window,
                std::size_t hop) {
  if (window.empty() || hop == 0) throw Error("stft: empty window or zero hop");
  if (signal.size() < window.size()) throw Error("recording too short");
}

double power_norm(std::span<const double> window) {
  const double sum = std::accumulate(window.begin(), window.end(), 0.0);
  return 1.0 / (sum * sum);
}

}  // namespace

std::vector<double> frame_power_spectra_serial(std::span<const double> signal,
                                               std::span<const double> window,
                                               std::size_t hop) {
  check_args(signal, window, hop);
  const std::size_t frames = stft_frame_count(signal.size(), window.size(), hop);
  const std::size_t bins = window.size() / 2 + 1;
  const double norm = power_norm(window);
  std::vector<double> out(frames * bins);
  FrameScratch scratch(window.size());
  for (std::size_t f = 0; f < frames; ++f)
    frame_power(signal, window, f * hop, norm, scratch, out.data() + f * bins);
  return out;
}

std::vector<double> frame_power_spectra_omp(std::span<const double> signal,
                                            std::span<const double> window,
                                            std::size_t hop) {
  check_args(signal, window, hop);
  const std::size_t frames = stft_frame_count(signal.size(), window.size(), hop);
  const std::size_t bins = window.size() / 2 + 1;
  const double norm = power_norm(window);
  std::vector<double> out(frames * bins);
  const auto n_frames = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel
  {
    FrameScratch scratch(window.size());
#pragma omp for schedule(static)
    for (std::ptrdiff_t f = 0; f < n_frames; ++f) {
      const auto fi = static_cast<std::size_t>(f);
      frame_power(signal, window, fi * hop, norm, scratch, out.data() + fi * bins);
    }
  }
  return out;
}

}  // namespace squeal::kernels
