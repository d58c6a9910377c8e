#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "squeal/kernels/stft_kernels.hpp"
#include "squeal/signal.hpp"
#include "squeal/wav.hpp"

using namespace squeal;

namespace {

// IEC 61672 with the rounded pole frequencies and the +2.00 dB offset.
double a_weight_reference(double f) {
  const double f2 = f * f;
  const double ra = 12194.0 * 12194.0 * f2 * f2 /
                    ((f2 + 20.6 * 20.6) * std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) *
                     (f2 + 12194.0 * 12194.0));
  return 20.0 * std::log10(ra) + 2.00;
}

std::vector<double> sine(std::size_t n, double f, double fs, double amp, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + phase);
  return x;
}

std::vector<double> white(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

Spectrogram flat_spectrogram(double level, std::size_t bins = 401, double df = 12.5) {
  Spectrogram s;
  s.fs = df * 2.0 * static_cast<double>(bins - 1);
  s.window_len = 2 * (bins - 1);
  s.hop = s.window_len / 2;
  s.frame_times = {0.0};
  for (std::size_t k = 0; k < bins; ++k) s.bin_freqs.push_back(df * static_cast<double>(k));
  s.levels.assign(bins, level);
  return s;
}

}  // namespace

TEST_SUITE("signal_core") {

TEST_CASE("a-weighting matches the standard curve") {
  CHECK(a_weighting_gain(1000.0) == 0.0);
  CHECK(std::abs(a_weighting_gain(100.0) - (-19.14)) <= 0.1);
  CHECK(std::abs(a_weighting_gain(10000.0) - (-2.49)) <= 0.1);
  for (double f = 20.0; f < 25000.0; f *= 1.1)
    CHECK(std::abs(a_weighting_gain(f) - a_weight_reference(f)) < 0.02);
  CHECK(a_weighting_gain(0.0) == kAWeightingDcDb);
}

TEST_CASE("a-weighting is unimodal with its maximum near 2.5 kHz") {
  double best_f = 0.0, best = -1e9, prev = -1e9;
  bool descending = false;
  for (double f = 10.0; f < 25600.0; f += 5.0) {
    const double g = a_weighting_gain(f);
    if (g > best) {
      best = g;
      best_f = f;
    }
    if (g < prev) descending = true;
    if (descending) CHECK(g <= prev + 1e-12);
    prev = g;
  }
  CHECK(best_f > 2000.0);
  CHECK(best_f < 3000.0);
}

TEST_CASE("frame count formula") {
  for (std::size_t len = 4096; len < 20000; len += 777)
    for (std::size_t hop : {1u, 512u, 2048u, 4096u}) {
      std::size_t brute = 0;
      for (std::size_t s = 0; s + 4096 <= len; s += hop) ++brute;
      CHECK(stft_frame_count(len, 4096, hop) == brute);
    }
  CHECK(stft_frame_count(100, 4096, 2048) == 0);
}

TEST_CASE("sine centred on a bin reads its closed-form level") {
  const double fs = 51200.0;
  for (double f : {1000.0, 2000.0, 6250.0, 12500.0}) {
    for (double amp : {1.0, 0.01}) {
      AudioRecording rec{sine(fs, f, fs, amp, 0.3), fs};
      const auto spec = stft_spectrogram(rec);
      const auto k = spec.nearest_bin(f);
      const double expected = 20.0 * std::log10(amp / std::numbers::sqrt2 / default_ref_pressure()) +
                              a_weighting_gain(f);
      for (std::size_t fr = 0; fr < spec.n_frames(); ++fr)
        CHECK(std::abs(spec.at(fr, k) - expected) <= 0.5);
    }
  }
}

TEST_CASE("full-scale sine is 94 dB unweighted") {
  StftConfig cfg;
  cfg.a_weighted = false;
  AudioRecording rec{sine(16384, 1000.0, 51200.0, 1.0), 51200.0};
  const auto spec = stft_spectrogram(rec, cfg);
  CHECK(spec.at(0, spec.nearest_bin(1000.0)) == doctest::Approx(94.0).epsilon(1e-6));
  CHECK(tone_level(spec, 0, 1000.0) == doctest::Approx(94.0).epsilon(1e-3));
}

TEST_CASE("tone level is insensitive to bin offset") {
  StftConfig cfg;
  cfg.a_weighted = false;
  for (double f : {1000.0, 1003.0, 1006.25, 1011.0}) {
    AudioRecording rec{sine(8192, f, 51200.0, 0.5), 51200.0};
    const auto spec = stft_spectrogram(rec, cfg);
    const double expected = 20.0 * std::log10(0.5 / std::numbers::sqrt2 / default_ref_pressure());
    CHECK(std::abs(tone_level(spec, 0, f) - expected) < 0.05);
  }
}

TEST_CASE("silence sits at the floor") {
  AudioRecording rec{std::vector<double>(8192, 0.0), 51200.0};
  const auto spec = stft_spectrogram(rec);
  for (double v : spec.levels) CHECK(v == kLevelFloorDb);
}

TEST_CASE("Parseval: summed bin powers equal corrected windowed power") {
  StftConfig cfg;
  cfg.a_weighted = false;
  AudioRecording rec{white(4096 * 3, 7), 51200.0};
  const auto spec = stft_spectrogram(rec, cfg);
  const auto w = make_window(WindowFunction::Hann, 4096);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  const double ref2 = default_ref_pressure() * default_ref_pressure();
  for (std::size_t fr = 0; fr < spec.n_frames(); ++fr) {
    double freq_power = 0.0;
    for (double db : spec.frame(fr)) freq_power += ref2 * std::pow(10.0, db / 10.0);
    double time_power = 0.0;
    for (std::size_t i = 0; i < 4096; ++i) {
      const double v = w[i] * rec.samples[fr * 2048 + i];
      time_power += v * v;
    }
    time_power *= 4096.0 / (wsum * wsum);
    CHECK(std::abs(freq_power / time_power - 1.0) < 0.01);
  }
}

TEST_CASE("power spectra agree with a direct DFT") {
  const std::size_t n = 64;
  const auto x = white(n * 3, 3);
  const auto w = make_window(WindowFunction::Hann, n);
  const auto p = kernels::frame_power_spectra_serial(x, w, n / 2);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  const std::size_t bins = n / 2 + 1;
  REQUIRE(p.size() == bins * 5);
  for (std::size_t fr = 0; fr < 5; ++fr)
    for (std::size_t k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += w[i] * x[fr * n / 2 + i] *
               std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / n);
      const double c = (k == 0 || k == bins - 1) ? 1.0 : 2.0;
      CHECK(p[fr * bins + k] == doctest::Approx(c * std::norm(acc) / (wsum * wsum)).epsilon(1e-9));
    }
}

TEST_CASE("parallel and serial spectra are bit-identical") {
  const auto x = white(51200, 11);
  const auto w = make_window(WindowFunction::Hann, 4096);
  CHECK(kernels::frame_power_spectra_serial(x, w, 2048) == kernels::frame_power_spectra_omp(x, w, 2048));
}

TEST_CASE("stft is deterministic and scales by 6.02 dB per doubling") {
  AudioRecording rec{white(20000, 5), 51200.0};
  const auto a = stft_spectrogram(rec);
  CHECK(a.levels == stft_spectrogram(rec).levels);
  auto loud = rec;
  for (auto& v : loud.samples) v *= 2.0;
  const auto b = stft_spectrogram(loud);
  for (std::size_t i = 0; i < a.levels.size(); ++i)
    if (a.levels[i] > kLevelFloorDb + 10.0) CHECK(std::abs(b.levels[i] - a.levels[i] - 6.0206) < 0.01);
}

TEST_CASE("spectrogram axes") {
  AudioRecording rec{white(10000, 1), 51200.0};
  const auto s = stft_spectrogram(rec);
  CHECK(s.n_frames() == 3);
  CHECK(s.bin_freqs.front() == 0.0);
  CHECK(s.bin_freqs.back() == 25600.0);
  for (std::size_t k = 1; k < s.n_bins(); ++k) CHECK(s.bin_freqs[k] > s.bin_freqs[k - 1]);
  for (std::size_t f = 1; f < s.n_frames(); ++f) CHECK(s.frame_times[f] > s.frame_times[f - 1]);
}

TEST_CASE("stft errors") {
  AudioRecording shortrec{std::vector<double>(100, 0.0), 51200.0};
  CHECK_THROWS_WITH(stft_spectrogram(shortrec), "recording too short");
  AudioRecording ok{std::vector<double>(8192, 0.0), 51200.0};
  StftConfig bad;
  bad.window_len = 1000;
  CHECK_THROWS_AS(stft_spectrogram(ok, bad), Error);
  bad = {};
  bad.hop = 0;
  CHECK_THROWS_AS(stft_spectrogram(ok, bad), Error);
  AudioRecording nan{std::vector<double>(8192, std::nan("")), 51200.0};
  CHECK_THROWS_AS(stft_spectrogram(nan), Error);
}

TEST_CASE("band mean level") {
  auto s = flat_spectrogram(40.0);
  CHECK(band_mean_level(s, 0, 2000.0, 1000.0) == doctest::Approx(40.0));
  s.levels[s.nearest_bin(2000.0)] = 80.0;
  CHECK(band_mean_level(s, 0, 2000.0, 1000.0) == doctest::Approx(40.0));

  auto ramp = flat_spectrogram(0.0);
  for (std::size_t k = 0; k < ramp.n_bins(); ++k) ramp.levels[k] = static_cast<double>(k);
  // bins 120..200 in band, 158..162 excluded
  double sum = 0.0;
  int n = 0;
  for (int k = 120; k <= 200; ++k)
    if (k < 158 || k > 162) {
      sum += k;
      ++n;
    }
  CHECK(band_mean_level(ramp, 0, 2000.0, 1000.0) == doctest::Approx(sum / n));

  // clipped at DC: bins 0..40 minus 0..2
  CHECK(band_mean_level(ramp, 0, 0.0, 1000.0) == doctest::Approx((3.0 + 40.0) / 2.0));
  CHECK_THROWS_AS(band_mean_level(ramp, 0, 1e6, 100.0), Error);
}

TEST_CASE("wav round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "squeal_wav_test";
  std::filesystem::create_directories(dir);
  AudioRecording rec{sine(1000, 440.0, 8000.0, 0.5), 8000.0};
  write_wav(dir / "f.wav", rec, WavFormat::Float32);
  const auto f = read_wav(dir / "f.wav");
  CHECK(f.fs == 8000.0);
  REQUIRE(f.samples.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(f.samples[i] == doctest::Approx(rec.samples[i]).epsilon(1e-6));
  write_wav(dir / "p.wav", rec, WavFormat::Pcm16);
  const auto p = read_wav(dir / "p.wav");
  for (std::size_t i = 0; i < 1000; ++i) CHECK(std::abs(p.samples[i] - rec.samples[i]) < 1.0 / 32768.0 + 1e-9);
  std::filesystem::remove_all(dir);
}

}
