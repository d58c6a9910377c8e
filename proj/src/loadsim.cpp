#include "squeal/loadsim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace squeal {

const std::array<std::string, kLoadChannels>& channel_names() {
  static const std::array<std::string, kLoadChannels> names{"omega", "p",       "M",     "mu",
                                                            "T_rot", "T_fluid", "T_amb", "H"};
  return names;
}

bool LoadSequence::squealing() const {
  return std::any_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; });
}

double LoadSequence::squeal_time() const {
  return static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1})) / fs;
}

double LoadSequence::onset() const {
  const auto it = std::find(labels.begin(), labels.end(), std::uint8_t{1});
  if (it == labels.end()) return -1.0;
  return static_cast<double>(it - labels.begin()) / fs;
}

void LoadSequence::validate() const {
  if (size() < 2) throw Error("load sequence: need at least two samples");
  if (data.size() != size() * kLoadChannels) throw Error("load sequence: channel length mismatch");
  if (!(fs > 0.0)) throw Error("load sequence: sampling rate must be positive");
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t c = 0; c < kLoadChannels; ++c)
      if (!std::isfinite(data[i * kLoadChannels + c])) throw Error("load sequence: non-finite value");
    const double mu = at(i, Mu);
    if (!(mu > 0.0 && mu < 1.5)) throw Error("load sequence: friction coefficient out of range");
    if (labels[i] > 1) throw Error("load sequence: labels must be 0 or 1");
    if (labels[i] && !(at(i, Omega) > 0.0)) throw Error("load sequence: squeal label at standstill");
  }
}

void write_load_csv(const std::filesystem::path& path, const LoadSequence& seq) {
  std::string out = "t";
  for (const auto& n : channel_names()) out += "," + n;
  out += ",squeal\n";
  for (std::size_t i = 0; i < seq.size(); ++i) {
    out += fmt_num(static_cast<double>(i) / seq.fs);
    for (std::size_t c = 0; c < kLoadChannels; ++c) out += "," + fmt_num(seq.data[i * kLoadChannels + c]);
    out += seq.labels[i] ? ",1\n" : ",0\n";
  }
  write_file_atomic(path, out);
}

namespace {

double parse_double(std::string_view s, const std::filesystem::path& path) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw Error("malformed number '" + std::string(s) + "' in " + path.string());
  return v;
}

}  // namespace

LoadSequence read_load_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error("empty load file " + path.string());
  std::string expected = "t";
  for (const auto& n : channel_names()) expected += "," + n;
  expected += ",squeal";
  if (line != expected) throw Error("unexpected header in " + path.string());
  LoadSequence seq;
  seq.id = path.stem().string();
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      cells.push_back(rest.substr(0, pos));
    cells.push_back(rest);
    if (cells.size() != kLoadChannels + 2) throw Error("wrong column count in " + path.string());
    times.push_back(parse_double(cells[0], path));
    for (std::size_t c = 0; c < kLoadChannels; ++c) seq.data.push_back(parse_double(cells[c + 1], path));
    const double lab = parse_double(cells.back(), path);
    if (lab != 0.0 && lab != 1.0) throw Error("squeal label must be 0 or 1 in " + path.string());
    seq.labels.push_back(lab != 0.0 ? 1 : 0);
  }
  if (times.size() >= 2) seq.fs = 1.0 / (times[1] - times[0]);
  for (std::size_t i = 1; i < times.size(); ++i)
    if (std::abs((times[i] - times[i - 1]) * seq.fs - 1.0) > 1e-6)
      throw Error("non-uniform sampling in " + path.string());
  seq.validate();
  return seq;
}

void SystemSpec::validate() const {
  if (!(kappa_max > 0.0 && kappa_max < 0.5)) throw Error("system spec: kappa_max must be in (0, 0.5)");
  if (!(gain >= 0.0)) throw Error("system spec: gain must be non-negative");
  if (!(mu_p_min >= 0.0 && mu_p_max > mu_p_min)) throw Error("system spec: friction window must satisfy 0 <= min < max");
  if (!(detune_amp > 0.0 && detune_amp < 1.0)) throw Error("system spec: detune amplitude must be in (0, 1)");
  if (!(detune_period > 0.0)) throw Error("system spec: detune period must be positive");
  if (!(d0 >= 0.0) || !(temp_scale > 0.0)) throw Error("system spec: damping parameters invalid");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw Error("system spec: flip probability must be in [0, 1]");
  if (!(min_squeal >= 0.0)) throw Error("system spec: minimum squeal duration must be non-negative");
}

double SystemSpec::max_unstable_detuning() const {
  // kappa^2 > Delta^2 with Delta = -delta - delta^2/2 and kappa <= kappa_max
  return 1.0 - std::sqrt(1.0 - 2.0 * kappa_max);
}

SystemSpec system_preset(const std::string& name) {
  SystemSpec s;
  s.name = name;
  if (name == "A") return s;
  if (name == "B") {
    s.omega_star = 370.0;
    return s;
  }
  s.family = "CD";
  s.gain = 3.0;
  s.mu_p_min = 0.0;
  s.mu_p_max = 5.0;
  if (name == "C") {
    s.omega_star = 850.0;
    return s;
  }
  if (name == "D") {
    s.omega_star = 730.0;
    return s;
  }
  throw Error("unknown system preset '" + name + "' (expected A, B, C or D)");
}

json to_json(const SystemSpec& s) {
  return {{"name", s.name},          {"family", s.family},
          {"omega_star", s.omega_star}, {"gain", s.gain},
          {"kappa_max", s.kappa_max},   {"detune_amp", s.detune_amp},
          {"mu_p_min", s.mu_p_min},     {"mu_p_max", s.mu_p_max},
          {"detune_period", s.detune_period}, {"d0", s.d0},
          {"temp_scale", s.temp_scale}, {"t_ref", s.t_ref},
          {"flip_prob", s.flip_prob},   {"min_squeal", s.min_squeal},
          {"seed", s.seed}};
}

SystemSpec system_spec_from_json(const json& j) {
  SystemSpec s = j.contains("preset") ? system_preset(j["preset"].get<std::string>()) : SystemSpec{};
  s.name = j.value("name", s.name);
  s.family = j.value("family", s.family);
  s.omega_star = j.value("omega_star", s.omega_star);
  s.gain = j.value("gain", s.gain);
  s.kappa_max = j.value("kappa_max", s.kappa_max);
  s.mu_p_min = j.value("mu_p_min", s.mu_p_min);
  s.mu_p_max = j.value("mu_p_max", s.mu_p_max);
  s.detune_amp = j.value("detune_amp", s.detune_amp);
  s.detune_period = j.value("detune_period", s.detune_period);
  s.d0 = j.value("d0", s.d0);
  s.temp_scale = j.value("temp_scale", s.temp_scale);
  s.t_ref = j.value("t_ref", s.t_ref);
  s.flip_prob = j.value("flip_prob", s.flip_prob);
  s.min_squeal = j.value("min_squeal", s.min_squeal);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

namespace {

// Half-width in rpm of the band around omega_star (mod detune_period) where
// |delta| stays below the destabilising limit.
double band_half_width(const SystemSpec& s) {
  const double r = s.max_unstable_detuning() / s.detune_amp;
  if (r >= 1.0) return 0.5 * s.detune_period;
  return s.detune_period / std::numbers::pi * std::asin(r);
}

}  // namespace

void check_family_separation(const std::vector<SystemSpec>& specs) {
  for (std::size_t a = 0; a < specs.size(); ++a)
    for (std::size_t b = a + 1; b < specs.size(); ++b) {
      const auto& x = specs[a];
      const auto& y = specs[b];
      if (x.family == y.family) continue;
      if (x.mu_p_max <= y.mu_p_min || y.mu_p_max <= x.mu_p_min) continue;
      if (x.detune_period != y.detune_period)
        throw Error("families " + x.family + " and " + y.family + " must share the detuning period");
      const double period = x.detune_period;
      double gap = std::fmod(std::abs(x.omega_star - y.omega_star), period);
      gap = std::min(gap, period - gap);
      if (gap <= band_half_width(x) + band_half_width(y))
        throw Error("instability bands of " + x.name + " and " + y.name + " overlap");
    }
}

double coupling(const LoadPoint& x, const SystemSpec& s) {
  const double mp = x.mu * x.pressure;
  if (mp < s.mu_p_min || mp > s.mu_p_max) return 0.0;
  return s.kappa_max * std::tanh(s.gain * mp / 100.0 / s.kappa_max);
}

Eigen::Matrix2d stiffness_matrix(const LoadPoint& x, const SystemSpec& s) {
  const double delta = s.detune_amp * std::sin(std::numbers::pi * (x.omega - s.omega_star) / s.detune_period);
  const double kappa = coupling(x, s);
  Eigen::Matrix2d k;
  k << 1.0, kappa, -kappa, (1.0 + delta) * (1.0 + delta);
  return k;
}

Eigen::Matrix2d damping_matrix(const LoadPoint& x, const SystemSpec& s) {
  return s.d0 * std::exp(-(x.t_rot - s.t_ref) / s.temp_scale) * Eigen::Matrix2d::Identity();
}

FlutterModes flutter_eigenvalues(const Eigen::Matrix2d& k, const Eigen::Matrix2d& d) {
  if (!k.allFinite() || !d.allFinite()) throw Error("flutter_eigenvalues: non-finite matrix entry");
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a.topRightCorner<2, 2>() = Eigen::Matrix2d::Identity();
  a.bottomLeftCorner<2, 2>() = -k;
  a.bottomRightCorner<2, 2>() = -d;
  Eigen::EigenSolver<Eigen::Matrix4d> solver(a, true);
  if (solver.info() != Eigen::Success) throw Error("flutter_eigenvalues: eigen-solve failed");
  const auto values = solver.eigenvalues();
  const auto vectors = solver.eigenvectors();
  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    if (values[i].real() != values[j].real()) return values[i].real() > values[j].real();
    return values[i].imag() > values[j].imag();
  });
  FlutterModes m;
  for (int r = 0; r < 2; ++r) {
    m.lambda[r] = values[order[r]];
    Eigen::Vector2cd v = vectors.col(order[r]).head<2>();
    m.shapes[r] = v / v.norm();
  }
  return m;
}

bool label_stability(const LoadPoint& x, const SystemSpec& spec) {
  if (!(x.omega > 0.0)) return false;
  if (coupling(x, spec) == 0.0) return false;
  const auto m = flutter_eigenvalues(stiffness_matrix(x, spec), damping_matrix(x, spec));
  return m.lambda[0].real() > 0.0;
}

std::vector<std::uint8_t> label_sequence(const LoadSequence& seq, const SystemSpec& spec) {
  const std::size_t n = seq.size();
  std::vector<std::uint8_t> raw(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const LoadPoint x{seq.at(i, Omega), seq.at(i, Pressure), seq.at(i, Mu), seq.at(i, TRot)};
    raw[i] = label_stability(x, spec) ? 1 : 0;
  }
  const auto min_run = static_cast<std::size_t>(std::llround(spec.min_squeal * seq.fs));
  for (std::size_t i = 0; i < n;) {
    if (!raw[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && raw[j]) ++j;
    if (j - i < min_run) std::fill(raw.begin() + static_cast<std::ptrdiff_t>(i), raw.begin() + static_cast<std::ptrdiff_t>(j), 0);
    i = j;
  }
  return raw;
}

void BrakeEvent::validate() const {
  if (kind != "stop" && kind != "drag") throw Error("brake event: kind must be 'stop' or 'drag'");
  if (!(duration * kLoadFs >= 2.0)) throw Error("brake event: duration too short");
  if (!(omega0 >= 0.0)) throw Error("brake event: negative rotational speed");
  if (!(p_start >= 0.0) || !(p_end >= 0.0)) throw Error("brake event: negative pressure");
  if (!(ramp_time >= 0.0)) throw Error("brake event: negative ramp time");
  if (!(mu0 > 0.0 && mu0 < 1.5)) throw Error("brake event: mu0 must be in (0, 1.5)");
  if (!(mu_noise >= 0.0)) throw Error("brake event: negative friction noise");
  for (double v : {t_rot0, t_fluid0, t_amb, humidity})
    if (!std::isfinite(v)) throw Error("brake event: non-finite initial condition");
}

json to_json(const BrakeEvent& e) {
  return {{"kind", e.kind},       {"duration", e.duration}, {"omega0", e.omega0},
          {"p_start", e.p_start}, {"p_end", e.p_end},       {"ramp_time", e.ramp_time},
          {"t_rot0", e.t_rot0},   {"t_fluid0", e.t_fluid0}, {"t_amb", e.t_amb},
          {"humidity", e.humidity}, {"mu0", e.mu0},         {"mu_noise", e.mu_noise},
          {"seed", e.seed}};
}

BrakeEvent brake_event_from_json(const json& j) {
  BrakeEvent e;
  e.kind = j.value("kind", e.kind);
  e.duration = j.value("duration", e.duration);
  e.omega0 = j.value("omega0", e.omega0);
  e.p_start = j.value("p_start", e.p_start);
  e.p_end = j.value("p_end", e.p_end);
  e.ramp_time = j.value("ramp_time", e.ramp_time);
  e.t_rot0 = j.value("t_rot0", e.t_rot0);
  e.t_fluid0 = j.value("t_fluid0", e.t_fluid0);
  e.t_amb = j.value("t_amb", e.t_amb);
  e.humidity = j.value("humidity", e.humidity);
  e.mu0 = j.value("mu0", e.mu0);
  e.mu_noise = j.value("mu_noise", e.mu_noise);
  e.seed = j.value("seed", e.seed);
  e.validate();
  return e;
}

BrakeEvent random_brake_event(std::uint64_t seed, double stop_fraction) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  BrakeEvent e;
  e.seed = mix_seed(seed, 1);
  e.duration = uniform(2.0, 10.5);
  e.kind = u01(rng) < stop_fraction ? "stop" : "drag";
  e.omega0 = uniform(100.0, 1200.0);
  if (e.kind == "stop") {
    e.p_start = 0.0;
    e.p_end = uniform(5.0, 60.0);
  } else {
    e.p_start = uniform(0.0, 60.0);
    e.p_end = uniform(0.0, 60.0);
  }
  e.t_amb = uniform(10.0, 35.0);
  e.t_rot0 = uniform(40.0, 250.0);
  e.t_fluid0 = e.t_amb + uniform(0.2, 0.6) * (e.t_rot0 - e.t_amb);
  e.humidity = uniform(30.0, 90.0);
  e.mu0 = uniform(0.35, 0.5);
  return e;
}

LoadSequence simulate_clean(const BrakeEvent& ev, const SystemSpec& spec) {
  ev.validate();
  spec.validate();
  const auto n = static_cast<std::size_t>(std::llround(ev.duration * kLoadFs));
  const double dt = 1.0 / kLoadFs;
  const double t_end = static_cast<double>(n - 1) * dt;
  std::mt19937_64 rng(ev.seed);
  std::normal_distribution<double> gauss(0.0, ev.mu_noise);

  LoadSequence seq;
  seq.kind = ev.kind;
  seq.data.assign(n * kLoadChannels, 0.0);
  seq.labels.assign(n, 0);
  double t_rot = ev.t_rot0;
  double t_fluid = ev.t_fluid0;
  double wander = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    double omega = ev.omega0;
    double p = ev.p_start + (ev.p_end - ev.p_start) * t / t_end;
    if (ev.kind == "stop") {
      omega = i + 1 == n ? 0.0 : ev.omega0 * (1.0 - t / t_end);
      p = ev.ramp_time > 0.0 ? ev.p_end * std::min(t / ev.ramp_time, 1.0) : ev.p_end;
    }
    wander += (gauss(rng) - wander) * 0.1;
    const double mu =
        std::clamp(ev.mu0 + 0.0008 * (t_rot - 100.0) - 0.001 * (p - 20.0) + wander, 0.05, 1.2);
    seq.at(i, Omega) = omega;
    seq.at(i, Pressure) = p;
    seq.at(i, Torque) = 25.0 * mu * p;
    seq.at(i, Mu) = mu;
    seq.at(i, TRot) = t_rot;
    seq.at(i, TFluid) = t_fluid;
    seq.at(i, TAmb) = ev.t_amb;
    seq.at(i, Humidity) = ev.humidity;
    const double heating = 1.39e-3 * mu * p * omega;
    const double cooling = 0.02 * (t_rot - ev.t_amb);
    t_fluid += dt * (t_rot - t_fluid) / 30.0;
    t_rot += dt * (heating - cooling);
  }
  seq.labels = label_sequence(seq, spec);
  return seq;
}

void apply_label_noise(LoadSequence& seq, const SystemSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xf11b));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const std::size_t n = seq.size();
  if (u01(rng) < spec.flip_prob) {
    if (seq.squealing()) {
      std::fill(seq.labels.begin(), seq.labels.end(), 0);
    } else {
      std::size_t moving = n;
      while (moving > 0 && !(seq.at(moving - 1, Omega) > 0.0)) --moving;
      const double len = 0.5 + 2.5 * u01(rng);
      const auto width = std::min(moving, static_cast<std::size_t>(std::llround(len * kLoadFs)));
      const auto start = static_cast<std::size_t>(u01(rng) * static_cast<double>(moving - width + 1));
      std::fill_n(seq.labels.begin() + static_cast<std::ptrdiff_t>(start), std::min(width, moving - start), 1);
    }
  }
}

LoadSequence simulate_braking(const BrakeEvent& ev, const SystemSpec& spec) {
  auto seq = simulate_clean(ev, spec);
  apply_label_noise(seq, spec, ev.seed);
  return seq;
}

json to_json(const DatasetSummary& s) {
  json j = {{"system", s.system}, {"N", s.n},         {"N_sq", s.n_squeal},
            {"attempts", s.attempts}, {"seed", s.seed}, {"target", s.target}};
  auto quantiles = [](std::vector<double> v) {
    json q = json::object();
    if (v.empty()) return q;
    std::sort(v.begin(), v.end());
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
      const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()) - 1e-9));
      q[fmt_num(p)] = v[std::clamp<std::size_t>(k, 1, v.size()) - 1];
    }
    return q;
  };
  j["squeal_duration_quantiles"] = quantiles(s.squeal_durations);
  j["braking_duration_quantiles"] = quantiles(s.braking_durations);
  return j;
}

Dataset generate_dataset(const SystemSpec& spec, std::size_t n, double target, std::uint64_t seed,
                         double stop_fraction) {
  if (n == 0) throw Error("generate_dataset: need at least one braking");
  if (!(target >= 0.0 && target <= 1.0)) throw Error("generate_dataset: target must be in [0, 1]");
  spec.validate();
  const auto want_sq = static_cast<std::size_t>(std::llround(target * static_cast<double>(n)));
  const std::size_t want_quiet = n - want_sq;
  const std::size_t max_attempts = 50 * n;
  constexpr std::size_t kBlock = 64;

  Dataset ds;
  std::size_t got_sq = 0, got_quiet = 0, attempts = 0;
  std::vector<LoadSequence> block(kBlock);
  std::vector<std::uint64_t> seeds(kBlock);
  while (got_sq < want_sq || got_quiet < want_quiet) {
    if (attempts >= max_attempts)
      throw Error("generate_dataset: squeal fraction " + fmt_num(target) + " not reached after " +
                  std::to_string(attempts) + " candidates (" + std::to_string(got_sq) + "/" +
                  std::to_string(want_sq) + " squealing, " + std::to_string(got_quiet) + "/" +
                  std::to_string(want_quiet) + " quiet)");
    const std::size_t count = std::min(kBlock, max_attempts - attempts);
    const std::size_t base = attempts;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t b = 0; b < count; ++b)
    {
      const auto ev = random_brake_event(mix_seed(seed, base + b), stop_fraction);
      seeds[b] = ev.seed;
      block[b] = simulate_clean(ev, spec);
    }
    for (std::size_t b = 0; b < count && (got_sq < want_sq || got_quiet < want_quiet); ++b) {
      ++attempts;
      auto& seq = block[b];
      const bool sq = seq.squealing();
      if (sq ? got_sq >= want_sq : got_quiet >= want_quiet) continue;
      (sq ? got_sq : got_quiet) += 1;
      apply_label_noise(seq, spec, seeds[b]);
      seq.id = spec.name + "_" + std::to_string(ds.brakings.size());
      ds.summary.braking_durations.push_back(seq.duration());
      if (seq.squealing()) {
        ++ds.summary.n_squeal;
        ds.summary.squeal_durations.push_back(seq.squeal_time());
      }
      ds.brakings.push_back(std::move(seq));
    }
  }
  ds.summary.system = spec.name;
  ds.summary.n = n;
  ds.summary.attempts = attempts;
  ds.summary.seed = seed;
  ds.summary.target = target;
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  for (const auto& seq : ds.brakings) write_load_csv(dir / (seq.id + ".csv"), seq);
  json s = to_json(ds.summary);
  json kinds = json::object();
  for (const auto& seq : ds.brakings) kinds[seq.id] = seq.kind;
  s["kinds"] = kinds;
  write_json(dir / "summary.json", s);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("dataset directory not found: " + dir.string());
  Dataset ds;
  const json s = read_json(dir / "summary.json");
  ds.summary.system = s.value("system", "");
  ds.summary.n = s.value("N", std::size_t{0});
  ds.summary.n_squeal = s.value("N_sq", std::size_t{0});
  ds.summary.attempts = s.value("attempts", std::size_t{0});
  ds.summary.seed = s.value("seed", std::uint64_t{0});
  ds.summary.target = s.value("target", 0.0);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  // numeric suffix order, so ids come back in generation order
  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    const auto sa = a.stem().string(), sb = b.stem().string();
    const auto na = sa.substr(sa.rfind('_') + 1), nb = sb.substr(sb.rfind('_') + 1);
    if (na.size() != nb.size()) return na.size() < nb.size();
    return sa < sb;
  });
  for (const auto& f : files) {
    auto seq = read_load_csv(f);
    if (s.contains("kinds") && s["kinds"].contains(seq.id)) seq.kind = s["kinds"][seq.id].get<std::string>();
    ds.summary.braking_durations.push_back(seq.duration());
    if (seq.squealing()) ds.summary.squeal_durations.push_back(seq.squeal_time());
    ds.brakings.push_back(std::move(seq));
  }
  if (ds.brakings.size() != ds.summary.n)
    throw Error("dataset " + dir.string() + ": summary lists " + std::to_string(ds.summary.n) +
                " brakings but " + std::to_string(ds.brakings.size()) + " files were found");
  return ds;
}

}  // namespace squeal
