#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "squeal/io.hpp"
#include "squeal/loadsim.hpp"

namespace squeal {

struct WindowSpec {
  std::size_t w = 200;
  std::size_t h = 150;

  /// h = round(fraction * w), at least 1.
  static WindowSpec from_fraction(std::size_t w, double fraction);
  void validate() const;
};

json to_json(const WindowSpec& s);
WindowSpec window_spec_from_json(const json& j);

struct WindowRange {
  std::size_t start = 0;
  std::size_t real = 0;  // samples taken from the sequence; the rest is padding
};

/// Starts at 0, h, 2h, ... for full windows. The first start past the last
/// full window is kept zero-padded when it holds more than w/2 samples, some
/// of which no earlier window covers. Empty when n_t <= w/2.
std::vector<WindowRange> window_ranges(std::size_t n_t, const WindowSpec& spec);

enum class TargetMode { Scalar, Sequence };

std::string to_string(TargetMode m);
TargetMode target_mode_from_string(const std::string& s);

struct ChannelStats {
  std::array<double, kLoadChannels> mean{};
  std::array<double, kLoadChannels> std{};
};

json to_json(const ChannelStats& s);
ChannelStats channel_stats_from_json(const json& j);

/// Windows of many brakings. Inputs are [n x w x m] row-major; targets are one
/// value per window (Scalar) or per position (Sequence, padding labelled 0).
struct WindowedDataset {
  WindowSpec spec;
  TargetMode mode = TargetMode::Scalar;
  std::vector<double> inputs;
  std::vector<std::uint8_t> targets;
  std::vector<std::uint32_t> braking;  // index into braking_ids
  std::vector<std::uint32_t> start;
  std::vector<std::uint32_t> real;
  std::vector<std::string> braking_ids;
  std::vector<std::uint8_t> braking_squeal;
  bool normalized = false;
  ChannelStats stats;

  std::size_t size() const { return braking.size(); }
  std::size_t w() const { return spec.w; }
  std::size_t target_len() const { return mode == TargetMode::Scalar ? 1 : spec.w; }
  const double* window(std::size_t i) const { return inputs.data() + i * spec.w * kLoadChannels; }
  const std::uint8_t* target(std::size_t i) const { return targets.data() + i * target_len(); }
  /// Indices of windows whose braking is selected.
  std::vector<std::size_t> windows_of(std::span<const std::uint8_t> braking_selected) const;
  /// Copy restricted to the given windows; braking tables are kept whole.
  WindowedDataset subset(std::span<const std::size_t> windows) const;
  void validate() const;
};

/// Windows of a single braking.
WindowedDataset slide_windows(const LoadSequence& seq, const WindowSpec& spec, TargetMode mode);
WindowedDataset build_windows(std::span<const LoadSequence> brakings, const WindowSpec& spec,
                              TargetMode mode);

/// Mean and population standard deviation over the real samples of the given windows.
ChannelStats compute_stats(const WindowedDataset& ds, std::span<const std::size_t> windows);

/// (x - mean) / std per channel; channels with zero spread are only centred.
/// Padding stays exactly zero.
WindowedDataset normalize(WindowedDataset ds, const ChannelStats& stats);

/// Per-class proportional split of brakings: 1 marks training.
std::vector<std::uint8_t> stratified_split(std::span<const std::uint8_t> labels, double train_fraction,
                                           std::uint64_t seed);
/// Per-class round-robin fold index for every braking.
std::vector<std::size_t> stratified_kfold(std::span<const std::uint8_t> labels, std::size_t k,
                                          std::uint64_t seed);

/// <stem>.bin holds float64 inputs then uint8 targets, little-endian;
/// <stem>.json describes the layout, provenance and stats.
void save_windows(const std::filesystem::path& stem, const WindowedDataset& ds);
WindowedDataset load_windows(const std::filesystem::path& stem);
void export_windows_csv(const std::filesystem::path& path, const WindowedDataset& ds);

}  // namespace squeal
