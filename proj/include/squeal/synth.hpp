#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "squeal/eval.hpp"
#include "squeal/io.hpp"
#include "squeal/noise_class.hpp"
#include "squeal/signal.hpp"

namespace squeal {

/// One noise event in a synthetic scene. Levels are A-weighted; for squeal
/// the level is that of the fundamental tone, for the other classes the
/// A-weighted RMS over [t0, t1].
struct EventSpec {
  NoiseClass cls = NoiseClass::Squeal;
  double t0 = 0.0, t1 = 0.0;
  double f0 = 0.0, f1 = 0.0;
  double level = 70.0;

  // squeal: tone at (f0 + f1) / 2
  int harmonics = 0;       // overtones at 2f, 3f, ... each 10 dB below the previous
  double am_depth = 0.0;   // 0..1
  double am_rate = 4.0;    // Hz
  double fm_depth = 0.0;   // peak deviation, Hz
  double fm_rate = 2.0;    // Hz

  // wirebrush
  double chirp_rate = 30.0;  // chirps per second

  double tone_frequency() const { return 0.5 * (f0 + f1); }
  void validate(double duration, double fs) const;
};

struct SceneSpec {
  double duration = 5.0;
  double fs = 51200.0;
  std::vector<EventSpec> events;
  double floor_level = 30.0;  // dB(A) of the background
  double pink_slope = 1.0;    // background power falls as 1/f^slope
  std::uint64_t seed = 0;
  double ref_pressure = default_ref_pressure();

  void validate() const;
};

/// Ground truth: one box per event, in event order.
struct SceneAnnotation {
  std::vector<EventSpec> events;
  std::vector<BBox> boxes;

  ImageAnnotation to_image(const std::string& image_id) const;
};

struct Scene {
  AudioRecording audio;
  SceneAnnotation annotation;
};

/// Background floor plus every event, summed. Each event draws from its own
/// random stream keyed on the scene seed and the event's fields, so adding an
/// event never perturbs the others.
Scene render_scene(const SceneSpec& spec);

/// Renders a single event without background into a zeroed buffer of the
/// scene's length.
std::vector<double> render_event(const EventSpec& ev, const SceneSpec& scene);
std::vector<double> render_background(const SceneSpec& scene);

json to_json(const EventSpec& ev);
EventSpec event_spec_from_json(const json& j);
json to_json(const SceneSpec& s);
SceneSpec scene_spec_from_json(const json& j);
json to_json(const SceneAnnotation& a);

/// Parameters for randomly drawn evaluation corpora.
struct CorpusSpec {
  std::size_t n_scenes = 100;
  double duration = 6.0;
  double fs = 51200.0;
  double floor_level = 30.0;
  double quiet_fraction = 0.2;      // scenes with background only
  std::size_t max_squeals = 2;
  double squeal_level_min = 55.0;
  double squeal_level_max = 90.0;
  double squeal_duration_min = 1.0;
  double squeal_duration_max = 3.0;
  double squeal_f_min = 1200.0;
  double squeal_f_max = 15000.0;
  double box_half_width = 100.0;    // frequency half-extent of squeal boxes
  double other_event_prob = 0.3;    // chance of each non-squeal class per scene
  std::uint64_t seed = 0;
};

json to_json(const CorpusSpec& c);
CorpusSpec corpus_spec_from_json(const json& j);

/// Scene i of a random corpus. Squeals within one scene are separated by at
/// least 1 kHz so their boxes never overlap.
SceneSpec random_scene(const CorpusSpec& corpus, std::size_t index);

}  // namespace squeal
