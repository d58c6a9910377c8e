#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace squeal::detail {

// Thin FFTW wrapper owning its plan and scratch buffers. Planning is serialised
// behind a global lock; use one instance per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft();

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // out must hold bins() values.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // in holds bins() values; result unnormalised (scaled by n).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_buf_;
  void* cplx_buf_;
  void* fwd_plan_;
  void* inv_plan_;
};

std::vector<std::complex<double>> rfft(std::span<const double> x);
// Normalised inverse of rfft for a signal of length n.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

}  // namespace squeal::detail
