#include <doctest.h>

#include <cmath>
#include <random>

#include "squeal/detector.hpp"
#include "squeal/synth.hpp"

using namespace squeal;

namespace {

Spectrogram flat(double level, double df, std::size_t bins = 2049) {
  Spectrogram s;
  s.window_len = 2 * (bins - 1);
  s.fs = df * static_cast<double>(s.window_len);
  s.hop = s.window_len / 2;
  s.frame_times = {0.0};
  for (std::size_t k = 0; k < bins; ++k) s.bin_freqs.push_back(df * static_cast<double>(k));
  s.levels.assign(bins, level);
  return s;
}

// One peak per listed frame at freq, frames spaced by hop seconds.
std::vector<std::vector<Peak>> peak_table(std::size_t n_frames, const std::vector<std::size_t>& on,
                                          double freq, double level = 70.0) {
  std::vector<std::vector<Peak>> t(n_frames);
  for (auto f : on) t[f].push_back({f, 0, freq, level});
  return t;
}

std::vector<double> times(std::size_t n, double hop) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = 0.04 + hop * static_cast<double>(i);
  return t;
}

std::vector<std::size_t> range(std::size_t a, std::size_t b) {
  std::vector<std::size_t> r;
  for (auto i = a; i < b; ++i) r.push_back(i);
  return r;
}

EventSpec squeal_at(double f, double level, double t0, double t1) {
  EventSpec e;
  e.f0 = f - 100.0;
  e.f1 = f + 100.0;
  e.level = level;
  e.t0 = t0;
  e.t1 = t1;
  return e;
}

constexpr double kHop = 2048.0 / 51200.0;

}  // namespace

TEST_SUITE("spectral_detector") {

TEST_CASE("gamma density") {
  CHECK(gamma_pdf(0.0, 2.55, 1.07) == 0.0);
  CHECK(gamma_pdf(1.0, 1.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(std::abs(gamma_pdf(1.6585, 2.55, 1.07) - 0.283991) < 1e-6);
  // integrates to one
  double sum = 0.0;
  for (double x = 0.0005; x < 40.0; x += 0.001) sum += gamma_pdf(x, 2.55, 1.07) * 0.001;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  // maximum at the mode
  const double peak = gamma_pdf(1.6585, 2.55, 1.07);
  for (double x = 0.0; x < 10.0; x += 0.01) CHECK(gamma_pdf(x, 2.55, 1.07) <= peak + 1e-15);
  CHECK_THROWS_AS(gamma_pdf(-0.1, 2.55, 1.07), Error);
}

TEST_CASE("confidence score") {
  const ConfidenceModel m;
  CHECK(confidence_score(45.0, 0.0, m) == 0.5);
  CHECK(confidence_score(120.0, m.mode(), m) == 1.0);
  CHECK(confidence_score(82.5, m.mode(), m) == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(confidence_score(10.0, 30.0, m) >= 0.5);
  CHECK(confidence_score(200.0, m.mode(), m) == 1.0);
  for (double d : {0.1, 0.7, 1.6585, 4.0})
    for (double l = 30.0; l < 130.0; l += 1.0) {
      const double c = confidence_score(l, d, m);
      CHECK(c >= 0.5);
      CHECK(c <= 1.0);
      CHECK(confidence_score(l + 1.0, d, m) >= c);
    }
  ConfidenceModel published;
  published.pdf_max = 0.285;
  CHECK(std::abs(confidence_score(120.0, published.mode(), published) - 1.0) < 1e-3);
  CHECK_THROWS_AS(confidence_score(60.0, -1.0, m), Error);
}

TEST_CASE("tonal peaks in hand-made frames") {
  DetectorConfig cfg;
  auto s = flat(40.0, 12.5);
  CHECK(find_tonal_peaks(s, 0, cfg).empty());

  const auto k = s.nearest_bin(3000.0);
  s.levels[k] = 75.0;
  auto peaks = find_tonal_peaks(s, 0, cfg);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].bin == k);
  CHECK(peaks[0].freq == doctest::Approx(3000.0));
  CHECK(peaks[0].level == 75.0);

  auto two = flat(40.0, 10.0);
  two.levels[two.nearest_bin(4000.0)] = 75.0;
  two.levels[two.nearest_bin(4060.0)] = 72.0;
  peaks = find_tonal_peaks(two, 0, cfg);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].freq == doctest::Approx(4000.0));
  CHECK(peaks[1].freq == doctest::Approx(4060.0));

  auto quiet_peak = flat(20.0, 12.5);
  quiet_peak.levels[k] = 45.0;
  CHECK(find_tonal_peaks(quiet_peak, 0, cfg).empty());  // below min_level

  auto blunt = flat(40.0, 12.5);
  blunt.levels[k] = 50.0;
  CHECK(find_tonal_peaks(blunt, 0, cfg).empty());  // not sharp enough

  auto outside = flat(40.0, 12.5);
  outside.levels[outside.nearest_bin(500.0)] = 80.0;
  CHECK(find_tonal_peaks(outside, 0, cfg).empty());
}

TEST_CASE("tracking a continuous peak") {
  DetectorConfig cfg;
  const auto t = times(100, kHop);
  const auto frames = range(10, 61);  // 51 frames, 2.0 s between first and last
  const auto events = group_and_track(peak_table(100, frames, 2000.0), t, kHop, cfg);
  REQUIRE(events.size() == 1);
  CHECK(std::abs(events[0].duration() - 2.0) <= kHop);
  CHECK(events[0].f_center == doctest::Approx(2000.0));
}

TEST_CASE("gaps shorter than max_gap are bridged") {
  DetectorConfig cfg;
  const auto t = times(200, kHop);
  auto on = range(10, 30);
  for (auto f : range(34, 54)) on.push_back(f);  // 3 missing frames = 0.12 s
  CHECK(group_and_track(peak_table(200, on, 2000.0), t, kHop, cfg).size() == 1);

  on = range(10, 30);
  for (auto f : range(40, 60)) on.push_back(f);  // 10 missing frames = 0.4 s
  CHECK(group_and_track(peak_table(200, on, 2000.0), t, kHop, cfg).size() == 2);
}

TEST_CASE("single-frame peaks are discarded") {
  DetectorConfig cfg;
  const auto t = times(50, kHop);
  CHECK(group_and_track(peak_table(50, {20}, 2000.0), t, kHop, cfg).empty());
}

TEST_CASE("slow drift stays one track, distinct tones stay apart") {
  DetectorConfig cfg;
  const auto t = times(100, kHop);
  std::vector<std::vector<Peak>> table(100);
  for (std::size_t f = 0; f < 60; ++f) {
    table[f].push_back({f, 0, 2000.0 + 2.0 * static_cast<double>(f), 70.0});
    table[f].push_back({f, 0, 2500.0, 65.0});
  }
  const auto ev = group_and_track(table, t, kHop, cfg);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].f_center == doctest::Approx(2059.0));
  CHECK(ev[1].f_center == doctest::Approx(2500.0));
  CHECK(ev[0].peak_level == 70.0);
}

TEST_CASE("detects a synthetic squeal") {
  SceneSpec s;
  s.duration = 4.0;
  s.seed = 21;
  s.events.push_back(squeal_at(2000.0, 70.0, 1.0, 3.0));
  const auto ev = detect_squeal(render_scene(s).audio);
  REQUIRE(ev.size() == 1);
  CHECK(std::abs(ev[0].f_center - 2000.0) <= 25.0);
  CHECK(std::abs(ev[0].t0 - 1.0) <= 2 * kHop);
  CHECK(std::abs(ev[0].t1 - 3.0) <= 2 * kHop);
  CHECK(ev[0].confidence > 0.5);
  CHECK(ev[0].confidence <= 1.0);
}

TEST_CASE("quiet scene yields nothing") {
  SceneSpec s;
  s.duration = 4.0;
  s.seed = 2;
  CHECK(detect_squeal(render_scene(s).audio).empty());
}

TEST_CASE("a click does not register as squeal") {
  SceneSpec s;
  s.duration = 4.0;
  s.seed = 8;
  s.events.push_back(squeal_at(5000.0, 72.0, 0.5, 2.0));
  EventSpec click;
  click.cls = NoiseClass::Click;
  click.t0 = 2.8;
  click.t1 = 2.95;
  click.f0 = 0.0;
  click.f1 = 25600.0;
  click.level = 95.0;
  s.events.push_back(click);
  const auto ev = detect_squeal(render_scene(s).audio);
  REQUIRE(ev.size() == 1);
  CHECK(std::abs(ev[0].f_center - 5000.0) <= 25.0);
}

TEST_CASE("event invariants and threshold monotonicity on random scenes") {
  CorpusSpec c;
  c.seed = 77;
  c.other_event_prob = 0.6;
  for (std::size_t i = 0; i < 12; ++i) {
    const auto scene = render_scene(random_scene(c, i));
    const auto spec = stft_spectrogram(scene.audio);
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (double sharp : {5.0, 10.0, 15.0, 20.0, 30.0}) {
      DetectorConfig cfg;
      cfg.sharpness_db = sharp;
      const auto ev = detect_squeal(spec, cfg, {});
      CHECK(ev.size() <= prev);
      prev = ev.size();
      for (const auto& e : ev) {
        CHECK(e.duration() >= cfg.min_duration);
        CHECK(e.peak_level >= cfg.min_level);
        CHECK(e.f_center >= cfg.f_min);
        CHECK(e.f_center <= cfg.f_max);
      }
    }
    prev = std::numeric_limits<std::size_t>::max();
    for (double lvl : {30.0, 50.0, 60.0, 70.0, 85.0}) {
      DetectorConfig cfg;
      cfg.min_level = lvl;
      const auto n = detect_squeal(spec, cfg, {}).size();
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("detection is deterministic") {
  CorpusSpec c;
  c.seed = 5;
  const auto audio = render_scene(random_scene(c, 1)).audio;
  const auto a = detect_squeal(audio);
  const auto b = detect_squeal(audio);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_json(a[i]) == to_json(b[i]));
}

TEST_CASE("config validation and json") {
  DetectorConfig cfg;
  cfg.sharpness_db = 12.0;
  CHECK(to_json(detector_config_from_json(to_json(cfg))) == to_json(cfg));
  cfg.f_min = 20000.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  const SquealEvent e{2000.0, 1.0, 2.0, 70.0, 0.8};
  const auto b = to_bbox(e, 100.0);
  CHECK(b.z0 == 1900.0);
  CHECK(b.z1 == 2100.0);
  CHECK(*b.confidence == 0.8);
  CHECK(to_json(squeal_event_from_json(to_json(e))) == to_json(e));
}

}
