#include "squeal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fft.hpp"

namespace squeal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRampSeconds = 0.010;

std::size_t to_sample(double t, double fs) { return static_cast<std::size_t>(std::llround(t * fs)); }

void apply_ramps(std::span<double> x, std::size_t ramp) {
  ramp = std::min(ramp, x.size() / 2);
  for (std::size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(ramp));
    x[i] *= g;
    x[x.size() - 1 - i] *= g;
  }
}

void scale_to_level(std::span<double> x, double fs, double level, double ref) {
  const double rms = a_weighted_rms(x, fs);
  if (!(rms > 0.0)) return;
  const double g = rms_from_level(level, ref) / rms;
  for (double& v : x) v *= g;
}

double tone_amplitude(double freq, double level, double ref) {
  return std::numbers::sqrt2 * rms_from_level(level - a_weighting_gain(freq), ref);
}

std::uint64_t event_seed(const EventSpec& ev, std::uint64_t scene_seed) {
  return mix_seed(scene_seed, hash_string(to_json(ev).dump()));
}

void render_squeal(const EventSpec& ev, const SceneSpec& scene, std::mt19937_64& rng,
                   std::span<double> seg, std::size_t first) {
  const double fs = scene.fs;
  const double f = ev.tone_frequency();
  std::uniform_real_distribution<double> phase_dist(0.0, kTwoPi);
  const double am_norm = 1.0 / std::sqrt(1.0 + 0.5 * ev.am_depth * ev.am_depth);
  const double fm_index = ev.fm_rate > 0.0 ? ev.fm_depth / ev.fm_rate : 0.0;
  for (int k = 1; k <= ev.harmonics + 1; ++k) {
    const double fk = f * k;
    const double phase0 = phase_dist(rng);
    if (fk >= 0.5 * fs) continue;
    const double amp = tone_amplitude(fk, ev.level - 10.0 * (k - 1), scene.ref_pressure);
    for (std::size_t i = 0; i < seg.size(); ++i) {
      const double t = static_cast<double>(first + i) / fs;
      const double am = 1.0 + ev.am_depth * std::sin(kTwoPi * ev.am_rate * t);
      const double fm = fm_index * k * std::sin(kTwoPi * ev.fm_rate * t);
      seg[i] += amp * am_norm * am * std::sin(kTwoPi * fk * t + fm + phase0);
    }
  }
  apply_ramps(seg, to_sample(kRampSeconds, fs));
}

void render_click(const EventSpec& ev, const SceneSpec& scene, std::mt19937_64& rng,
                  std::span<double> seg) {
  std::normal_distribution<double> gauss;
  const double tau = std::max(1.0 / scene.fs, (ev.t1 - ev.t0) / 5.0);
  for (std::size_t i = 0; i < seg.size(); ++i)
    seg[i] = gauss(rng) * std::exp(-static_cast<double>(i) / scene.fs / tau);
  scale_to_level(seg, scene.fs, ev.level, scene.ref_pressure);
}

void render_wirebrush(const EventSpec& ev, const SceneSpec& scene, std::mt19937_64& rng,
                      std::span<double> seg) {
  const double fs = scene.fs;
  const double span = static_cast<double>(seg.size()) / fs;
  std::exponential_distribution<double> gap(ev.chirp_rate);
  std::uniform_real_distribution<double> len_dist(0.005, 0.045);
  std::uniform_real_distribution<double> freq_dist(ev.f0, ev.f1);
  for (double t = gap(rng); t < span; t += gap(rng)) {
    const double d = std::min(len_dist(rng), span);
    const double fa = freq_dist(rng);
    const double fb = freq_dist(rng);
    const double start = std::min(t, span - d);
    const std::size_t i0 = to_sample(start, fs);
    const std::size_t n = std::min(to_sample(d, fs), seg.size() - i0);
    for (std::size_t i = 0; i < n; ++i) {
      const double tau = static_cast<double>(i) / fs;
      const double env = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
      seg[i0 + i] += env * std::sin(kTwoPi * (fa * tau + 0.5 * (fb - fa) * tau * tau / d));
    }
  }
  scale_to_level(seg, fs, ev.level, scene.ref_pressure);
}

void render_artefact(const EventSpec& ev, const SceneSpec& scene, std::mt19937_64& rng,
                     std::span<double> seg) {
  std::normal_distribution<double> gauss;
  std::vector<double> white(seg.size());
  for (double& v : white) v = gauss(rng);
  auto spectrum = detail::rfft(white);
  const double df = scene.fs / static_cast<double>(seg.size());
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * df;
    if (f < ev.f0 || f > ev.f1) spectrum[k] = 0.0;
  }
  const auto band = detail::irfft(spectrum, seg.size());
  std::copy(band.begin(), band.end(), seg.begin());
  apply_ramps(seg, to_sample(kRampSeconds, scene.fs));
  scale_to_level(seg, scene.fs, ev.level, scene.ref_pressure);
}

}  // namespace

void EventSpec::validate(double duration, double fs) const {
  if (!(t0 >= 0.0 && t0 < t1 && t1 <= duration))
    throw Error("event exceeds scene bounds: need 0 <= t0 < t1 <= duration");
  if (!(f0 >= 0.0 && f0 < f1 && f1 <= 0.5 * fs))
    throw Error("event frequency range invalid: need 0 <= f0 < f1 <= fs/2");
  if (cls == NoiseClass::Squeal && (f0 < 1000.0 || f1 > 16000.0))
    throw Error("squeal must lie within 1-16 kHz");
  if (!std::isfinite(level)) throw Error("event level must be finite");
  if (harmonics < 0) throw Error("harmonic count must be non-negative");
  if (am_depth < 0.0 || am_depth > 1.0) throw Error("AM depth must be in [0, 1]");
  if (fm_depth < 0.0 || am_rate < 0.0 || fm_rate < 0.0) throw Error("modulation parameters must be non-negative");
  if (cls == NoiseClass::Wirebrush && !(chirp_rate > 0.0)) throw Error("chirp rate must be positive");
}

void SceneSpec::validate() const {
  if (!(duration > 0.0)) throw Error("scene duration must be positive");
  if (!(fs > 0.0)) throw Error("scene sampling rate must be positive");
  if (!(ref_pressure > 0.0)) throw Error("reference pressure must be positive");
  if (to_sample(duration, fs) < 1) throw Error("scene shorter than one sample");
  for (const auto& ev : events) ev.validate(duration, fs);
}

ImageAnnotation SceneAnnotation::to_image(const std::string& image_id) const {
  return {image_id, boxes};
}

std::vector<double> render_background(const SceneSpec& scene) {
  const std::size_t n = to_sample(scene.duration, scene.fs);
  std::vector<double> x(n, 0.0);
  if (n < 2) return x;
  std::mt19937_64 rng(mix_seed(scene.seed, hash_string("background")));
  std::normal_distribution<double> gauss;
  for (double& v : x) v = gauss(rng);
  auto spectrum = detail::rfft(x);
  spectrum[0] = 0.0;
  const double df = scene.fs / static_cast<double>(n);
  for (std::size_t k = 1; k < spectrum.size(); ++k)
    spectrum[k] *= std::pow(static_cast<double>(k) * df / 1000.0, -0.5 * scene.pink_slope);
  x = detail::irfft(spectrum, n);
  scale_to_level(x, scene.fs, scene.floor_level, scene.ref_pressure);
  return x;
}

std::vector<double> render_event(const EventSpec& ev, const SceneSpec& scene) {
  ev.validate(scene.duration, scene.fs);
  const std::size_t n = to_sample(scene.duration, scene.fs);
  std::vector<double> out(n, 0.0);
  const std::size_t first = std::min(to_sample(ev.t0, scene.fs), n);
  const std::size_t last = std::min(to_sample(ev.t1, scene.fs), n);
  if (last <= first) return out;
  std::span<double> seg(out.data() + first, last - first);
  std::mt19937_64 rng(event_seed(ev, scene.seed));
  switch (ev.cls) {
    case NoiseClass::Squeal: render_squeal(ev, scene, rng, seg, first); break;
    case NoiseClass::Click: render_click(ev, scene, rng, seg); break;
    case NoiseClass::Wirebrush: render_wirebrush(ev, scene, rng, seg); break;
    case NoiseClass::Artefact: render_artefact(ev, scene, rng, seg); break;
  }
  return out;
}

Scene render_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.audio.fs = spec.fs;
  scene.audio.samples = render_background(spec);
  for (const auto& ev : spec.events) {
    const auto x = render_event(ev, spec);
    for (std::size_t i = 0; i < x.size(); ++i) scene.audio.samples[i] += x[i];
    scene.annotation.events.push_back(ev);
    scene.annotation.boxes.push_back({ev.t0, ev.t1, ev.f0, ev.f1, ev.cls, std::nullopt});
  }
  return scene;
}

json to_json(const EventSpec& ev) {
  json j = {{"class", to_string(ev.cls)}, {"t0", ev.t0}, {"t1", ev.t1},
            {"f0", ev.f0}, {"f1", ev.f1}, {"level", ev.level}};
  if (ev.cls == NoiseClass::Squeal) {
    j["harmonics"] = ev.harmonics;
    j["am_depth"] = ev.am_depth;
    j["am_rate"] = ev.am_rate;
    j["fm_depth"] = ev.fm_depth;
    j["fm_rate"] = ev.fm_rate;
  }
  if (ev.cls == NoiseClass::Wirebrush) j["chirp_rate"] = ev.chirp_rate;
  return j;
}

EventSpec event_spec_from_json(const json& j) {
  EventSpec ev;
  ev.cls = noise_class_from_string(j.at("class").get<std::string>());
  ev.t0 = j.at("t0").get<double>();
  ev.t1 = j.at("t1").get<double>();
  ev.f0 = j.at("f0").get<double>();
  ev.f1 = j.at("f1").get<double>();
  ev.level = j.at("level").get<double>();
  ev.harmonics = j.value("harmonics", ev.harmonics);
  ev.am_depth = j.value("am_depth", ev.am_depth);
  ev.am_rate = j.value("am_rate", ev.am_rate);
  ev.fm_depth = j.value("fm_depth", ev.fm_depth);
  ev.fm_rate = j.value("fm_rate", ev.fm_rate);
  ev.chirp_rate = j.value("chirp_rate", ev.chirp_rate);
  return ev;
}

json to_json(const SceneSpec& s) {
  json events = json::array();
  for (const auto& ev : s.events) events.push_back(to_json(ev));
  return {{"duration", s.duration}, {"fs", s.fs}, {"floor_level", s.floor_level},
          {"pink_slope", s.pink_slope}, {"seed", s.seed}, {"ref_pressure", s.ref_pressure},
          {"events", events}};
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  s.duration = j.at("duration").get<double>();
  s.fs = j.value("fs", s.fs);
  s.floor_level = j.value("floor_level", s.floor_level);
  s.pink_slope = j.value("pink_slope", s.pink_slope);
  s.seed = j.value("seed", s.seed);
  s.ref_pressure = j.value("ref_pressure", s.ref_pressure);
  if (j.contains("events"))
    for (const auto& e : j["events"]) s.events.push_back(event_spec_from_json(e));
  s.validate();
  return s;
}

json to_json(const SceneAnnotation& a) {
  json events = json::array();
  for (const auto& ev : a.events) events.push_back(to_json(ev));
  json boxes = json::array();
  for (const auto& b : a.boxes) boxes.push_back(to_json(b));
  return {{"events", events}, {"boxes", boxes}};
}

json to_json(const CorpusSpec& c) {
  return {{"n_scenes", c.n_scenes},
          {"duration", c.duration},
          {"fs", c.fs},
          {"floor_level", c.floor_level},
          {"quiet_fraction", c.quiet_fraction},
          {"max_squeals", c.max_squeals},
          {"squeal_level_min", c.squeal_level_min},
          {"squeal_level_max", c.squeal_level_max},
          {"squeal_duration_min", c.squeal_duration_min},
          {"squeal_duration_max", c.squeal_duration_max},
          {"squeal_f_min", c.squeal_f_min},
          {"squeal_f_max", c.squeal_f_max},
          {"box_half_width", c.box_half_width},
          {"other_event_prob", c.other_event_prob},
          {"seed", c.seed}};
}

CorpusSpec corpus_spec_from_json(const json& j) {
  CorpusSpec c;
  c.n_scenes = j.value("n_scenes", c.n_scenes);
  c.duration = j.value("duration", c.duration);
  c.fs = j.value("fs", c.fs);
  c.floor_level = j.value("floor_level", c.floor_level);
  c.quiet_fraction = j.value("quiet_fraction", c.quiet_fraction);
  c.max_squeals = j.value("max_squeals", c.max_squeals);
  c.squeal_level_min = j.value("squeal_level_min", c.squeal_level_min);
  c.squeal_level_max = j.value("squeal_level_max", c.squeal_level_max);
  c.squeal_duration_min = j.value("squeal_duration_min", c.squeal_duration_min);
  c.squeal_duration_max = j.value("squeal_duration_max", c.squeal_duration_max);
  c.squeal_f_min = j.value("squeal_f_min", c.squeal_f_min);
  c.squeal_f_max = j.value("squeal_f_max", c.squeal_f_max);
  c.box_half_width = j.value("box_half_width", c.box_half_width);
  c.other_event_prob = j.value("other_event_prob", c.other_event_prob);
  c.seed = j.value("seed", c.seed);
  if (c.squeal_duration_max + 0.4 > c.duration)
    throw Error("corpus: scenes too short for the longest squeal");
  if (c.squeal_f_min - c.box_half_width < 1000.0 || c.squeal_f_max + c.box_half_width > 16000.0)
    throw Error("corpus: squeal boxes must stay within 1-16 kHz");
  return c;
}

SceneSpec random_scene(const CorpusSpec& corpus, std::size_t index) {
  std::mt19937_64 rng(mix_seed(corpus.seed, index));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  SceneSpec s;
  s.duration = corpus.duration;
  s.fs = corpus.fs;
  s.floor_level = corpus.floor_level;
  s.seed = mix_seed(corpus.seed, index + 0x9e37);
  if (u01(rng) < corpus.quiet_fraction) return s;

  const auto n_squeal = 1 + static_cast<std::size_t>(u01(rng) * static_cast<double>(corpus.max_squeals));
  std::vector<double> freqs;
  for (std::size_t attempt = 0; freqs.size() < std::min(n_squeal, corpus.max_squeals) && attempt < 100;
       ++attempt) {
    const double f = std::round(uniform(corpus.squeal_f_min, corpus.squeal_f_max));
    if (std::any_of(freqs.begin(), freqs.end(), [&](double g) { return std::abs(f - g) < 1000.0; }))
      continue;
    freqs.push_back(f);
    EventSpec ev;
    ev.cls = NoiseClass::Squeal;
    const double d = uniform(corpus.squeal_duration_min, corpus.squeal_duration_max);
    ev.t0 = uniform(0.2, corpus.duration - 0.2 - d);
    ev.t1 = ev.t0 + d;
    ev.f0 = f - corpus.box_half_width;
    ev.f1 = f + corpus.box_half_width;
    ev.level = uniform(corpus.squeal_level_min, corpus.squeal_level_max);
    s.events.push_back(ev);
  }

  const double nyquist = 0.5 * corpus.fs;
  if (u01(rng) < corpus.other_event_prob) {
    EventSpec ev;
    ev.cls = NoiseClass::Click;
    ev.t0 = uniform(0.1, corpus.duration - 0.3);
    ev.t1 = ev.t0 + uniform(0.05, 0.2);
    ev.f0 = 0.0;
    ev.f1 = nyquist;
    ev.level = uniform(60.0, 90.0);
    s.events.push_back(ev);
  }
  if (u01(rng) < corpus.other_event_prob) {
    EventSpec ev;
    ev.cls = NoiseClass::Wirebrush;
    const double d = uniform(0.5, 2.0);
    ev.t0 = uniform(0.1, corpus.duration - 0.1 - d);
    ev.t1 = ev.t0 + d;
    const double width = uniform(2000.0, 6000.0);
    ev.f0 = uniform(1000.0, 16000.0 - width);
    ev.f1 = ev.f0 + width;
    ev.level = uniform(50.0, 75.0);
    s.events.push_back(ev);
  }
  if (u01(rng) < corpus.other_event_prob) {
    EventSpec ev;
    ev.cls = NoiseClass::Artefact;
    const double d = uniform(0.3, 1.5);
    ev.t0 = uniform(0.1, corpus.duration - 0.1 - d);
    ev.t1 = ev.t0 + d;
    ev.f0 = 200.0;
    ev.f1 = std::min(20000.0, nyquist);
    ev.level = uniform(60.0, 85.0);
    s.events.push_back(ev);
  }
  return s;
}

}  // namespace squeal
