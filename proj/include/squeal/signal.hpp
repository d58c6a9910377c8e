#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "squeal/error.hpp"

namespace squeal {

/// Levels are clamped here instead of reaching -inf.
inline constexpr double kLevelFloorDb = -120.0;

/// A-weighting returned at f = 0, where the true gain is -inf.
inline constexpr double kAWeightingDcDb = -200.0;

/// Sound pressure sampled at fs. Units are arbitrary but calibrated through
/// StftConfig::ref_pressure.
struct AudioRecording {
  std::vector<double> samples;
  double fs = 51200.0;

  double duration() const { return static_cast<double>(samples.size()) / fs; }
  /// Throws Error when fs <= 0, the buffer is empty or a sample is not finite.
  void validate() const;
};

enum class WindowFunction { Hann, Rectangular };

/// Reference pressure for which a full-scale sine (peak amplitude 1.0) reads 94 dB.
double default_ref_pressure();

struct StftConfig {
  std::size_t window_len = 4096;
  std::size_t hop = 2048;
  WindowFunction window = WindowFunction::Hann;
  double ref_pressure = default_ref_pressure();
  bool a_weighted = true;

  void validate() const;
};

/// Time-frequency level map, row-major [n_frames x n_bins] in dB (dB(A) when
/// the producing config was A-weighted).
struct Spectrogram {
  std::vector<double> levels;
  std::vector<double> frame_times;  // frame centres, s
  std::vector<double> bin_freqs;    // Hz, 0 .. fs/2
  std::size_t window_len = 0;
  std::size_t hop = 0;
  double fs = 0.0;
  double enbw = 1.0;  // equivalent noise bandwidth of the taper, in bins
  double ref_pressure = 1.0;
  bool a_weighted = true;

  std::size_t n_frames() const { return frame_times.size(); }
  std::size_t n_bins() const { return bin_freqs.size(); }
  double bin_width() const { return fs / static_cast<double>(window_len); }

  double at(std::size_t frame, std::size_t bin) const { return levels[frame * n_bins() + bin]; }
  std::span<const double> frame(std::size_t i) const {
    return {levels.data() + i * n_bins(), n_bins()};
  }
  /// Index of the bin nearest to freq, clamped to the valid range.
  std::size_t nearest_bin(double freq) const;
};

/// IEC 61672 A-weighting in dB, normalised to 0 dB at 1 kHz.
double a_weighting_gain(double freq_hz);

/// Taper coefficients of length n (periodic form).
std::vector<double> make_window(WindowFunction fn, std::size_t n);

/// floor((len - window_len) / hop) + 1; 0 when the recording is shorter than a window.
std::size_t stft_frame_count(std::size_t len, std::size_t window_len, std::size_t hop);

/// Sliding-window amplitude spectra converted to (A-weighted) SPL per bin.
/// Each bin is scaled so that a sinusoid centred on the bin reads its true level.
Spectrogram stft_spectrogram(const AudioRecording& rec, const StftConfig& cfg = {});

/// Mean dB level over [center - width/2, center + width/2], clipped to the
/// spectrum. The bin nearest to `center` and two bins either side are excluded.
double band_mean_level(const Spectrogram& spec, std::size_t frame, double center, double width);

/// Overall level of one frame: bin powers summed and corrected by the taper's
/// noise bandwidth.
double frame_level(const Spectrogram& spec, std::size_t frame);

/// Level of a tone near `freq` from the power in +-3 bins, insensitive to
/// where the tone falls between bins.
double tone_level(const Spectrogram& spec, std::size_t frame, double freq);

/// Broadband A-weighted RMS of a block, computed in the frequency domain.
double a_weighted_rms(std::span<const double> samples, double fs);

/// dB <-> linear helpers relative to a reference pressure.
double level_from_rms(double rms, double ref_pressure);
double rms_from_level(double level_db, double ref_pressure);

}  // namespace squeal
