#include "squeal/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fft.hpp"
#include "squeal/kernels/stft_kernels.hpp"

namespace squeal {

void AudioRecording::validate() const {
  if (!(fs > 0.0)) throw Error("recording: sampling rate must be positive");
  if (samples.empty()) throw Error("recording: no samples");
  for (double s : samples)
    if (!std::isfinite(s)) throw Error("recording: non-finite sample");
}

double default_ref_pressure() { return std::pow(10.0, -94.0 / 20.0) / std::numbers::sqrt2; }

void StftConfig::validate() const {
  if (window_len == 0 || (window_len & (window_len - 1)) != 0)
    throw Error("stft: window length must be a power of two");
  if (hop == 0 || hop > window_len) throw Error("stft: hop must be in [1, window_len]");
  if (!(ref_pressure > 0.0)) throw Error("stft: reference pressure must be positive");
}

std::size_t Spectrogram::nearest_bin(double freq) const {
  const double idx = std::round(freq / bin_width());
  if (idx <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(idx), n_bins() - 1);
}

namespace {
double a_weighting_ratio(double f) {
  const double f2 = f * f;
  const double c1 = 20.598997 * 20.598997;
  const double c2 = 107.65265 * 107.65265;
  const double c3 = 737.86223 * 737.86223;
  const double c4 = 12194.217 * 12194.217;
  return c4 * f2 * f2 / ((f2 + c1) * std::sqrt((f2 + c2) * (f2 + c3)) * (f2 + c4));
}
}  // namespace

double a_weighting_gain(double freq_hz) {
  if (freq_hz <= 0.0) return kAWeightingDcDb;
  static const double at_1k = a_weighting_ratio(1000.0);
  return 20.0 * std::log10(a_weighting_ratio(freq_hz) / at_1k);
}

std::vector<double> make_window(WindowFunction fn, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (fn == WindowFunction::Hann) {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n));
  }
  return w;
}

std::size_t stft_frame_count(std::size_t len, std::size_t window_len, std::size_t hop) {
  if (len < window_len || hop == 0) return 0;
  return (len - window_len) / hop + 1;
}

double level_from_rms(double rms, double ref_pressure) {
  if (!(rms > 0.0)) return kLevelFloorDb;
  return std::max(kLevelFloorDb, 20.0 * std::log10(rms / ref_pressure));
}

double rms_from_level(double level_db, double ref_pressure) {
  return ref_pressure * std::pow(10.0, level_db / 20.0);
}

Spectrogram stft_spectrogram(const AudioRecording& rec, const StftConfig& cfg) {
  rec.validate();
  cfg.validate();
  if (rec.samples.size() < cfg.window_len) throw Error("recording too short");

  const auto window = make_window(cfg.window, cfg.window_len);
  const auto power = kernels::frame_power_spectra_omp(rec.samples, window, cfg.hop);

  Spectrogram spec;
  spec.window_len = cfg.window_len;
  spec.hop = cfg.hop;
  spec.fs = rec.fs;
  spec.ref_pressure = cfg.ref_pressure;
  spec.a_weighted = cfg.a_weighted;
  const double sum = std::accumulate(window.begin(), window.end(), 0.0);
  const double sum_sq = std::inner_product(window.begin(), window.end(), window.begin(), 0.0);
  spec.enbw = static_cast<double>(cfg.window_len) * sum_sq / (sum * sum);

  const std::size_t bins = cfg.window_len / 2 + 1;
  const std::size_t frames = power.size() / bins;
  spec.bin_freqs.resize(bins);
  std::vector<double> weight_db(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) {
    spec.bin_freqs[k] = static_cast<double>(k) * rec.fs / static_cast<double>(cfg.window_len);
    if (cfg.a_weighted) weight_db[k] = a_weighting_gain(spec.bin_freqs[k]);
  }
  spec.frame_times.resize(frames);
  for (std::size_t f = 0; f < frames; ++f)
    spec.frame_times[f] =
        (static_cast<double>(f * cfg.hop) + 0.5 * static_cast<double>(cfg.window_len)) / rec.fs;

  const double ref_sq = cfg.ref_pressure * cfg.ref_pressure;
  spec.levels.resize(power.size());
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double p = power[f * bins + k];
      const double db = p > 0.0 ? 10.0 * std::log10(p / ref_sq) + weight_db[k] : kLevelFloorDb;
      spec.levels[f * bins + k] = std::max(kLevelFloorDb, db);
    }
  }
  return spec;
}

double band_mean_level(const Spectrogram& spec, std::size_t frame, double center, double width) {
  if (frame >= spec.n_frames()) throw Error("band_mean_level: frame out of range");
  const double lo = center - 0.5 * width;
  const double hi = center + 0.5 * width;
  const double nyquist = spec.bin_freqs.back();
  if (hi < 0.0 || lo > nyquist) throw Error("band_mean_level: band outside spectrum");

  const std::size_t peak = spec.nearest_bin(center);
  const auto row = spec.frame(frame);
  double sum = 0.0;
  std::size_t count = 0;
  const double df = spec.bin_width();
  const auto k_lo = static_cast<std::size_t>(std::max(0.0, std::floor(lo / df)));
  const auto k_hi = std::min(spec.n_bins() - 1, static_cast<std::size_t>(std::ceil(hi / df)));
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    const double f = spec.bin_freqs[k];
    if (f < lo || f > hi) continue;
    const auto dist = k > peak ? k - peak : peak - k;
    if (dist <= 2) continue;
    sum += row[k];
    ++count;
  }
  if (count == 0) throw Error("band_mean_level: empty band");
  return sum / static_cast<double>(count);
}

double frame_level(const Spectrogram& spec, std::size_t frame) {
  const double ref_sq = spec.ref_pressure * spec.ref_pressure;
  double total = 0.0;
  for (double db : spec.frame(frame))
    if (db > kLevelFloorDb) total += ref_sq * std::pow(10.0, db / 10.0);
  return level_from_rms(std::sqrt(total / spec.enbw), spec.ref_pressure);
}

double tone_level(const Spectrogram& spec, std::size_t frame, double freq) {
  const double ref_sq = spec.ref_pressure * spec.ref_pressure;
  const auto centre = static_cast<std::ptrdiff_t>(spec.nearest_bin(freq));
  const auto last = static_cast<std::ptrdiff_t>(spec.n_bins()) - 1;
  double total = 0.0;
  for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, centre - 3);
       k <= std::min(last, centre + 3); ++k) {
    const double db = spec.at(frame, static_cast<std::size_t>(k));
    if (db > kLevelFloorDb) total += ref_sq * std::pow(10.0, db / 10.0);
  }
  return level_from_rms(std::sqrt(total / spec.enbw), spec.ref_pressure);
}

double a_weighted_rms(std::span<const double> samples, double fs) {
  if (samples.empty()) return 0.0;
  const auto spectrum = detail::rfft(samples);
  const std::size_t n = samples.size();
  double total = 0.0;
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    const double c = (n % 2 == 0 && k == spectrum.size() - 1) ? 1.0 : 2.0;
    const double gain = std::pow(10.0, a_weighting_gain(f) / 10.0);
    total += c * std::norm(spectrum[k]) * gain;
  }
  return std::sqrt(total) / static_cast<double>(n);
}

}  // namespace squeal
