#include "squeal/detector.hpp"

#include <algorithm>
#include <cmath>

namespace squeal {

void DetectorConfig::validate() const {
  if (!(f_min < f_max)) throw Error("detector: f_min must be below f_max");
  if (!(sharpness_db > 0.0)) throw Error("detector: sharpness must be positive");
  if (!(band_width > 0.0)) throw Error("detector: band width must be positive");
  if (!(group_tol > 0.0)) throw Error("detector: group tolerance must be positive");
  if (!(min_duration > 0.0)) throw Error("detector: minimum duration must be positive");
  if (!(max_gap >= 0.0)) throw Error("detector: max gap must be non-negative");
  stft.validate();
}

json to_json(const DetectorConfig& c) {
  return {{"f_min", c.f_min},
          {"f_max", c.f_max},
          {"sharpness_db", c.sharpness_db},
          {"band_width", c.band_width},
          {"group_tol", c.group_tol},
          {"min_level", c.min_level},
          {"min_duration", c.min_duration},
          {"max_gap", c.max_gap},
          {"window_len", c.stft.window_len},
          {"hop", c.stft.hop},
          {"ref_pressure", c.stft.ref_pressure},
          {"a_weighted", c.stft.a_weighted}};
}

DetectorConfig detector_config_from_json(const json& j) {
  DetectorConfig c;
  c.f_min = j.value("f_min", c.f_min);
  c.f_max = j.value("f_max", c.f_max);
  c.sharpness_db = j.value("sharpness_db", c.sharpness_db);
  c.band_width = j.value("band_width", c.band_width);
  c.group_tol = j.value("group_tol", c.group_tol);
  c.min_level = j.value("min_level", c.min_level);
  c.min_duration = j.value("min_duration", c.min_duration);
  c.max_gap = j.value("max_gap", c.max_gap);
  c.stft.window_len = j.value("window_len", c.stft.window_len);
  c.stft.hop = j.value("hop", c.stft.hop);
  c.stft.ref_pressure = j.value("ref_pressure", c.stft.ref_pressure);
  c.stft.a_weighted = j.value("a_weighted", c.stft.a_weighted);
  c.validate();
  return c;
}

json to_json(const SquealEvent& e) {
  return {{"class", "squeal"},      {"t0", e.t0},
          {"t1", e.t1},             {"f_center", e.f_center},
          {"level_dba", e.peak_level}, {"confidence", e.confidence}};
}

SquealEvent squeal_event_from_json(const json& j) {
  SquealEvent e;
  e.t0 = j.at("t0").get<double>();
  e.t1 = j.at("t1").get<double>();
  e.f_center = j.at("f_center").get<double>();
  e.peak_level = j.at("level_dba").get<double>();
  e.confidence = j.value("confidence", e.confidence);
  return e;
}

BBox to_bbox(const SquealEvent& e, double half_width) {
  // a zero-length event still needs a non-degenerate box
  const double t1 = e.t1 > e.t0 ? e.t1 : std::nextafter(e.t0, e.t0 + 1.0);
  return {e.t0, t1, e.f_center - half_width, e.f_center + half_width, NoiseClass::Squeal,
          e.confidence};
}

double gamma_pdf(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("gamma_pdf: shape and scale must be positive");
  if (x < 0.0 || std::isnan(x)) throw Error("gamma_pdf: x must be non-negative");
  if (x == 0.0) {
    if (a > 1.0) return 0.0;
    if (a == 1.0) return 1.0 / b;
    return std::numeric_limits<double>::infinity();
  }
  return std::exp((a - 1.0) * std::log(x) - x / b - a * std::log(b) - std::lgamma(a));
}

double ConfidenceModel::effective_pdf_max() const {
  return pdf_max > 0.0 ? pdf_max : gamma_pdf(mode(), gamma_a, gamma_b);
}

void ConfidenceModel::validate() const {
  if (!(gamma_a > 1.0)) throw Error("confidence model: gamma shape must exceed 1");
  if (!(gamma_b > 0.0)) throw Error("confidence model: gamma scale must be positive");
  if (!(level_lo < level_hi)) throw Error("confidence model: level range empty");
  if (pdf_max < 0.0) throw Error("confidence model: pdf_max must be non-negative");
}

double confidence_score(double level, double duration, const ConfidenceModel& model) {
  if (duration < 0.0) throw Error("confidence_score: negative duration");
  model.validate();
  const double c1 = std::clamp((level - model.level_lo) / (model.level_hi - model.level_lo), 0.0, 1.0);
  const double c2 =
      std::clamp(gamma_pdf(duration, model.gamma_a, model.gamma_b) / model.effective_pdf_max(), 0.0, 1.0);
  return (c1 + c2) / 4.0 + 0.5;
}

std::vector<Peak> find_tonal_peaks(const Spectrogram& spec, std::size_t frame,
                                   const DetectorConfig& cfg) {
  if (frame >= spec.n_frames()) throw Error("find_tonal_peaks: frame out of range");
  const auto row = spec.frame(frame);
  const double df = spec.bin_width();
  std::vector<Peak> peaks;
  for (std::size_t k = 1; k + 1 < row.size(); ++k) {
    const double f = spec.bin_freqs[k];
    if (f < cfg.f_min || f > cfg.f_max) continue;
    if (!(row[k] > row[k - 1] && row[k] >= row[k + 1])) continue;
    if (row[k] < cfg.min_level) continue;
    if (row[k] - band_mean_level(spec, frame, f, cfg.band_width) < cfg.sharpness_db) continue;
    const double a = row[k - 1], b = row[k], c = row[k + 1];
    const double den = a - 2.0 * b + c;
    const double delta = den < 0.0 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
    peaks.push_back({frame, k, f + delta * df, b});
  }
  return peaks;
}

namespace {

struct Track {
  double center = 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<Peak> members;
};

void flush_span(std::span<const Peak> span, std::span<const double> frame_times,
                const DetectorConfig& cfg, std::vector<SquealEvent>& out) {
  if (span.empty()) return;
  SquealEvent e;
  e.t0 = frame_times[span.front().frame];
  e.t1 = frame_times[span.back().frame];
  if (e.t1 - e.t0 < cfg.min_duration) return;
  double sum = 0.0;
  e.peak_level = span.front().level;
  for (const auto& p : span) {
    sum += p.freq;
    e.peak_level = std::max(e.peak_level, p.level);
  }
  e.f_center = sum / static_cast<double>(span.size());
  out.push_back(e);
}

}  // namespace

std::vector<SquealEvent> group_and_track(std::span<const std::vector<Peak>> peaks,
                                         std::span<const double> frame_times,
                                         double hop_seconds, const DetectorConfig& cfg) {
  std::vector<Track> tracks;
  for (const auto& frame_peaks : peaks) {
    std::vector<Peak> ordered(frame_peaks.begin(), frame_peaks.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const Peak& a, const Peak& b) { return a.level > b.level; });
    for (const auto& p : ordered) {
      if (p.frame >= frame_times.size()) throw Error("group_and_track: peak frame out of range");
      Track* best = nullptr;
      double best_dist = 0.0;
      for (auto& t : tracks) {
        const double d = std::abs(p.freq - t.center);
        if (d <= cfg.group_tol && (!best || d < best_dist)) {
          best = &t;
          best_dist = d;
        }
      }
      if (!best) {
        tracks.emplace_back();
        best = &tracks.back();
      }
      best->sum += p.freq;
      ++best->count;
      best->center = best->sum / static_cast<double>(best->count);
      best->members.push_back(p);
    }
  }

  std::vector<SquealEvent> events;
  for (auto& t : tracks) {
    std::stable_sort(t.members.begin(), t.members.end(),
                     [](const Peak& a, const Peak& b) { return a.frame < b.frame; });
    std::size_t start = 0;
    for (std::size_t i = 1; i <= t.members.size(); ++i) {
      const bool split =
          i == t.members.size() ||
          frame_times[t.members[i].frame] - frame_times[t.members[i - 1].frame] - hop_seconds >
              cfg.max_gap + 1e-9;
      if (split) {
        flush_span(std::span(t.members).subspan(start, i - start), frame_times, cfg, events);
        start = i;
      }
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const SquealEvent& a, const SquealEvent& b) {
    if (a.t0 != b.t0) return a.t0 < b.t0;
    return a.f_center < b.f_center;
  });
  return events;
}

std::vector<SquealEvent> detect_squeal(const Spectrogram& spec, const DetectorConfig& cfg,
                                       const ConfidenceModel& model) {
  cfg.validate();
  model.validate();
  std::vector<std::vector<Peak>> peaks(spec.n_frames());
  for (std::size_t f = 0; f < spec.n_frames(); ++f) peaks[f] = find_tonal_peaks(spec, f, cfg);
  auto events = group_and_track(peaks, spec.frame_times,
                                static_cast<double>(spec.hop) / spec.fs, cfg);
  for (auto& e : events) e.confidence = confidence_score(e.peak_level, e.duration(), model);
  return events;
}

std::vector<SquealEvent> detect_squeal(const AudioRecording& rec, const DetectorConfig& cfg,
                                       const ConfidenceModel& model) {
  cfg.validate();
  return detect_squeal(stft_spectrogram(rec, cfg.stft), cfg, model);
}

}  // namespace squeal
