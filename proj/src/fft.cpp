#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace squeal::detail {
namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  real_buf_ = fftw_alloc_real(n);
  auto* c = fftw_alloc_complex(n / 2 + 1);
  cplx_buf_ = c;
  std::lock_guard lock(planner_mutex());
  fwd_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_buf_, c, FFTW_ESTIMATE);
  inv_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), c, real_buf_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(fwd_plan_));
    fftw_destroy_plan(static_cast<fftw_plan>(inv_plan_));
  }
  fftw_free(real_buf_);
  fftw_free(cplx_buf_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  std::copy(in.begin(), in.end(), real_buf_);
  auto* c = static_cast<fftw_complex*>(cplx_buf_);
  fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_plan_), real_buf_, c);
  std::memcpy(static_cast<void*>(out.data()), c, bins() * sizeof(fftw_complex));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  auto* c = static_cast<fftw_complex*>(cplx_buf_);
  std::memcpy(c, in.data(), bins() * sizeof(fftw_complex));
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_plan_), c, real_buf_);
  std::copy(real_buf_, real_buf_ + n_, out.begin());
}

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  RealFft fft(x.size());
  std::vector<std::complex<double>> out(fft.bins());
  fft.forward(x, out);
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  RealFft fft(n);
  std::vector<double> out(n);
  fft.inverse(spectrum, out);
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

}  // namespace squeal::detail
