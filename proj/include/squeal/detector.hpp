#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "squeal/eval.hpp"
#include "squeal/io.hpp"
#include "squeal/signal.hpp"

namespace squeal {

struct DetectorConfig {
  double f_min = 1000.0;
  double f_max = 16000.0;
  double sharpness_db = 15.0;  // required excess over the band mean
  double band_width = 1000.0;
  double group_tol = 100.0;
  double min_level = 50.0;     // dB(A)
  double min_duration = 0.5;   // s
  double max_gap = 0.25;       // s of missing frames bridged inside one event
  StftConfig stft;

  void validate() const;
};

json to_json(const DetectorConfig& c);
DetectorConfig detector_config_from_json(const json& j);

struct Peak {
  std::size_t frame = 0;
  std::size_t bin = 0;
  double freq = 0.0;   // parabolically interpolated
  double level = 0.0;  // level of the peak bin
};

struct SquealEvent {
  double f_center = 0.0;
  double t0 = 0.0, t1 = 0.0;
  double peak_level = 0.0;
  double confidence = 0.5;

  double duration() const { return t1 - t0; }
};

json to_json(const SquealEvent& e);
SquealEvent squeal_event_from_json(const json& j);

/// Detection box: the event's time span by f_center +- half_width.
BBox to_bbox(const SquealEvent& e, double half_width);

struct ConfidenceModel {
  double gamma_a = 2.55;
  double gamma_b = 1.07;
  double pdf_max = 0.0;  // 0 selects the density at the mode
  double level_lo = 45.0;
  double level_hi = 120.0;

  double mode() const { return (gamma_a - 1.0) * gamma_b; }
  double effective_pdf_max() const;
  void validate() const;
};

/// Gamma density with shape a and scale b.
double gamma_pdf(double x, double a, double b);

/// (C1 + C2) / 4 + 1/2 with C1 the clamped level score and C2 the duration
/// density relative to its maximum.
double confidence_score(double level, double duration, const ConfidenceModel& model = {});

/// Sharp local maxima of one spectrogram frame.
std::vector<Peak> find_tonal_peaks(const Spectrogram& spec, std::size_t frame,
                                   const DetectorConfig& cfg);

/// Peaks grouped to running-mean centre frequencies, split into spans where
/// more than max_gap of frames are missing, short spans dropped. frame_times
/// maps Peak::frame to seconds; hop_seconds is the frame spacing. Confidence
/// is left at its default.
std::vector<SquealEvent> group_and_track(std::span<const std::vector<Peak>> peaks,
                                         std::span<const double> frame_times,
                                         double hop_seconds, const DetectorConfig& cfg);

/// Full pipeline; events sorted by t0 then f_center.
std::vector<SquealEvent> detect_squeal(const AudioRecording& rec, const DetectorConfig& cfg = {},
                                       const ConfidenceModel& model = {});

std::vector<SquealEvent> detect_squeal(const Spectrogram& spec, const DetectorConfig& cfg,
                                       const ConfidenceModel& model);

}  // namespace squeal
