#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "squeal/error.hpp"
#include "squeal/io.hpp"

namespace squeal {

inline constexpr std::size_t kLoadChannels = 8;
inline constexpr double kLoadFs = 100.0;

enum Channel : std::size_t { Omega, Pressure, Torque, Mu, TRot, TFluid, TAmb, Humidity };

/// Column names used in CSV files and manifests, in Channel order.
const std::array<std::string, kLoadChannels>& channel_names();

/// Braking loads sampled at fs, stored row-major [n_t x 8], with one squeal
/// label per sample.
struct LoadSequence {
  std::string id;
  std::string kind;  // "stop" or "drag"
  double fs = kLoadFs;
  std::vector<double> data;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  double duration() const { return static_cast<double>(size()) / fs; }
  double at(std::size_t i, Channel c) const { return data[i * kLoadChannels + c]; }
  double& at(std::size_t i, Channel c) { return data[i * kLoadChannels + c]; }
  bool squealing() const;
  /// Seconds labelled as squeal.
  double squeal_time() const;
  /// Time of the first squeal label, negative when there is none.
  double onset() const;
  void validate() const;
};

void write_load_csv(const std::filesystem::path& path, const LoadSequence& seq);
LoadSequence read_load_csv(const std::filesystem::path& path);

/// One brake system in the synthetic mode-coupling model.
///   K = [[1, kappa], [-kappa, (1 + delta)^2]], D = d I, M = I
///   kappa = kappa_max tanh(gain mu p / 100 / kappa_max) inside the friction
///           window mu p in [mu_p_min, mu_p_max], zero outside
///   delta = detune_amp sin(pi (Omega - omega_star) / detune_period)
///   d     = d0 exp(-(T_rot - t_ref) / temp_scale)
struct SystemSpec {
  std::string name = "A";
  std::string family = "AB";
  double omega_star = 250.0;  // rpm at the centre of the instability band
  double gain = 0.5;
  double kappa_max = 0.08;
  double mu_p_min = 24.0;  // bar
  double mu_p_max = 1e6;  // bar
  double detune_amp = 0.16;
  double detune_period = 1200.0;  // rpm
  double d0 = 0.05;
  double temp_scale = 3000.0;  // degC
  double t_ref = 20.0;
  double flip_prob = 0.02;      // per-braking label noise
  double min_squeal = 0.5;      // s of persistent instability counted as squeal
  std::uint64_t seed = 0;

  void validate() const;
  /// Largest |delta| for which any coupling can destabilise the system.
  double max_unstable_detuning() const;
};

/// Presets "A" and "B" (one family), "C" and "D" (another family).
SystemSpec system_preset(const std::string& name);
json to_json(const SystemSpec& s);
SystemSpec system_spec_from_json(const json& j);

/// Throws when two specs of different families could both be unstable at one
/// load point: their friction windows overlap and so do their speed bands.
void check_family_separation(const std::vector<SystemSpec>& specs);

struct LoadPoint {
  double omega = 0.0, pressure = 0.0, mu = 0.0, t_rot = 20.0;
};

Eigen::Matrix2d stiffness_matrix(const LoadPoint& x, const SystemSpec& spec);
Eigen::Matrix2d damping_matrix(const LoadPoint& x, const SystemSpec& spec);
double coupling(const LoadPoint& x, const SystemSpec& spec);

struct FlutterModes {
  std::array<std::complex<double>, 2> lambda;        // largest real parts first
  std::array<Eigen::Vector2cd, 2> shapes;            // unit-norm displacement vectors
};

/// Eigenvalues of lambda^2 I + lambda D + K through the 4x4 companion matrix.
FlutterModes flutter_eigenvalues(const Eigen::Matrix2d& stiffness, const Eigen::Matrix2d& damping);

/// Unstable (largest real part > 0) at this load point; never for omega <= 0.
bool label_stability(const LoadPoint& x, const SystemSpec& spec);

/// Per-sample instability with runs shorter than spec.min_squeal removed.
std::vector<std::uint8_t> label_sequence(const LoadSequence& seq, const SystemSpec& spec);

struct BrakeEvent {
  std::string kind = "drag";  // "stop" or "drag"
  double duration = 5.0;      // s
  double omega0 = 300.0;      // rpm
  double p_start = 0.0;       // bar; stop brakings ramp to p_end in ramp_time
  double p_end = 30.0;
  double ramp_time = 0.3;
  double t_rot0 = 100.0;
  double t_fluid0 = 60.0;
  double t_amb = 20.0;
  double humidity = 50.0;
  double mu0 = 0.42;
  double mu_noise = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

json to_json(const BrakeEvent& e);
BrakeEvent brake_event_from_json(const json& j);

/// Draws an event over the load grid used for dataset generation.
BrakeEvent random_brake_event(std::uint64_t seed, double stop_fraction = 0.5);

/// Integrates the thermal and friction model at 100 Hz and labels the result
/// without label noise.
LoadSequence simulate_clean(const BrakeEvent& event, const SystemSpec& spec);

/// With probability spec.flip_prob, drawn from seed: a squealing braking is
/// cleared, a quiet one gains a random squeal segment of 0.5-3 s.
void apply_label_noise(LoadSequence& seq, const SystemSpec& spec, std::uint64_t seed);

/// simulate_clean followed by apply_label_noise keyed on the event seed.
LoadSequence simulate_braking(const BrakeEvent& event, const SystemSpec& spec);

struct DatasetSummary {
  std::string system;
  std::size_t n = 0;
  std::size_t n_squeal = 0;
  std::size_t attempts = 0;
  std::uint64_t seed = 0;
  double target = 0.0;
  std::vector<double> squeal_durations;  // s, squealing brakings only
  std::vector<double> braking_durations;
};

json to_json(const DatasetSummary& s);

struct Dataset {
  std::vector<LoadSequence> brakings;
  DatasetSummary summary;
};

/// n brakings with round(target n) physically squealing ones, filled by
/// rejection from a seeded candidate stream. Selection uses the clean labels;
/// label noise is applied to accepted brakings afterwards, so N_sq can differ
/// from the quota by the flipped brakings. Candidates are simulated in parallel blocks but
/// accepted in stream order, so the result does not depend on thread count.
Dataset generate_dataset(const SystemSpec& spec, std::size_t n, double target, std::uint64_t seed,
                         double stop_fraction = 0.5);

void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace squeal
