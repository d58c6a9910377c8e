#include "squeal/preproc.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

namespace squeal {

static_assert(std::endian::native == std::endian::little, "window files are written little-endian");

WindowSpec WindowSpec::from_fraction(std::size_t w, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("window shift fraction must be in (0, 1]");
  WindowSpec s{w, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(w))))};
  s.validate();
  return s;
}

void WindowSpec::validate() const {
  if (w < 1) throw Error("window length must be positive");
  if (h < 1 || h > w) throw Error("window shift must be in [1, w]");
}

json to_json(const WindowSpec& s) { return {{"w", s.w}, {"h", s.h}}; }

WindowSpec window_spec_from_json(const json& j) {
  WindowSpec s;
  s.w = j.value("w", s.w);
  if (j.contains("h_fraction")) return WindowSpec::from_fraction(s.w, j.at("h_fraction").get<double>());
  s.h = j.value("h", s.h);
  s.validate();
  return s;
}

std::vector<WindowRange> window_ranges(std::size_t n_t, const WindowSpec& spec) {
  spec.validate();
  const std::size_t w = spec.w, h = spec.h;
  std::vector<WindowRange> out;
  std::size_t next = 0, covered = 0;
  for (; next + w <= n_t; next += h) {
    out.push_back({next, w});
    covered = next + w;
  }
  if (next < n_t) {
    const std::size_t r = n_t - next;
    if (2 * r > w && n_t > covered) out.push_back({next, r});
  }
  return out;
}

std::string to_string(TargetMode m) { return m == TargetMode::Scalar ? "scalar" : "sequence"; }

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "scalar" || s == "seq_to_scalar") return TargetMode::Scalar;
  if (s == "sequence" || s == "seq_to_seq") return TargetMode::Sequence;
  throw Error("unknown target mode '" + s + "' (expected scalar or sequence)");
}

json to_json(const ChannelStats& s) { return {{"mean", s.mean}, {"std", s.std}}; }

ChannelStats channel_stats_from_json(const json& j) {
  ChannelStats s;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  if (mean.size() != kLoadChannels || sd.size() != kLoadChannels)
    throw Error("channel stats need " + std::to_string(kLoadChannels) + " entries");
  std::copy(mean.begin(), mean.end(), s.mean.begin());
  std::copy(sd.begin(), sd.end(), s.std.begin());
  return s;
}

std::vector<std::size_t> WindowedDataset::windows_of(std::span<const std::uint8_t> braking_selected) const {
  if (braking_selected.size() != braking_ids.size()) throw Error("braking selection has the wrong length");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (braking_selected[braking[i]]) out.push_back(i);
  return out;
}

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> windows) const {
  WindowedDataset out;
  out.spec = spec;
  out.mode = mode;
  out.braking_ids = braking_ids;
  out.braking_squeal = braking_squeal;
  out.normalized = normalized;
  out.stats = stats;
  const std::size_t stride = spec.w * kLoadChannels;
  out.inputs.reserve(windows.size() * stride);
  out.targets.reserve(windows.size() * target_len());
  for (const auto i : windows) {
    if (i >= size()) throw Error("window index out of range");
    out.inputs.insert(out.inputs.end(), window(i), window(i) + stride);
    out.targets.insert(out.targets.end(), target(i), target(i) + target_len());
    out.braking.push_back(braking[i]);
    out.start.push_back(start[i]);
    out.real.push_back(real[i]);
  }
  return out;
}

void WindowedDataset::validate() const {
  spec.validate();
  const std::size_t n = size();
  if (start.size() != n || real.size() != n) throw Error("windowed dataset: provenance length mismatch");
  if (inputs.size() != n * spec.w * kLoadChannels) throw Error("windowed dataset: input size mismatch");
  if (targets.size() != n * target_len()) throw Error("windowed dataset: target size mismatch");
  if (braking_squeal.size() != braking_ids.size()) throw Error("windowed dataset: braking table mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (braking[i] >= braking_ids.size()) throw Error("windowed dataset: braking index out of range");
    if (real[i] < 1 || real[i] > spec.w) throw Error("windowed dataset: bad real length");
  }
}

namespace {

void append_windows(const LoadSequence& seq, std::uint32_t braking_index, const WindowSpec& spec,
                    TargetMode mode, WindowedDataset& out) {
  const std::size_t w = spec.w;
  for (const auto& r : window_ranges(seq.size(), spec)) {
    const std::size_t offset = out.inputs.size();
    out.inputs.resize(offset + w * kLoadChannels, 0.0);
    std::memcpy(out.inputs.data() + offset, seq.data.data() + r.start * kLoadChannels,
                r.real * kLoadChannels * sizeof(double));
    const auto labels = std::span(seq.labels).subspan(r.start, r.real);
    if (mode == TargetMode::Scalar) {
      out.targets.push_back(std::any_of(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
    } else {
      out.targets.insert(out.targets.end(), labels.begin(), labels.end());
      out.targets.resize(out.targets.size() + (w - r.real), 0);
    }
    out.braking.push_back(braking_index);
    out.start.push_back(static_cast<std::uint32_t>(r.start));
    out.real.push_back(static_cast<std::uint32_t>(r.real));
  }
}

}  // namespace

WindowedDataset slide_windows(const LoadSequence& seq, const WindowSpec& spec, TargetMode mode) {
  return build_windows(std::span(&seq, 1), spec, mode);
}

WindowedDataset build_windows(std::span<const LoadSequence> brakings, const WindowSpec& spec,
                              TargetMode mode) {
  spec.validate();
  WindowedDataset ds;
  ds.spec = spec;
  ds.mode = mode;
  for (std::size_t b = 0; b < brakings.size(); ++b) {
    const auto& seq = brakings[b];
    if (seq.data.size() != seq.size() * kLoadChannels) throw Error("load sequence " + seq.id + ": channel length mismatch");
    ds.braking_ids.push_back(seq.id);
    ds.braking_squeal.push_back(seq.squealing());
    append_windows(seq, static_cast<std::uint32_t>(b), spec, mode, ds);
  }
  return ds;
}

ChannelStats compute_stats(const WindowedDataset& ds, std::span<const std::size_t> windows) {
  std::array<double, kLoadChannels> sum{}, sq{};
  std::size_t count = 0;
  for (const auto i : windows) {
    const double* x = ds.window(i);
    for (std::size_t t = 0; t < ds.real[i]; ++t)
      for (std::size_t c = 0; c < kLoadChannels; ++c) sum[c] += x[t * kLoadChannels + c];
    count += ds.real[i];
  }
  if (count == 0) throw Error("compute_stats: no samples");
  ChannelStats s;
  for (std::size_t c = 0; c < kLoadChannels; ++c) s.mean[c] = sum[c] / static_cast<double>(count);
  for (const auto i : windows) {
    const double* x = ds.window(i);
    for (std::size_t t = 0; t < ds.real[i]; ++t)
      for (std::size_t c = 0; c < kLoadChannels; ++c) {
        const double d = x[t * kLoadChannels + c] - s.mean[c];
        sq[c] += d * d;
      }
  }
  for (std::size_t c = 0; c < kLoadChannels; ++c) s.std[c] = std::sqrt(sq[c] / static_cast<double>(count));
  return s;
}

WindowedDataset normalize(WindowedDataset ds, const ChannelStats& stats) {
  if (ds.normalized) throw Error("normalize: dataset is already normalized");
  std::array<double, kLoadChannels> scale{};
  for (std::size_t c = 0; c < kLoadChannels; ++c) {
    const bool flat = !(stats.std[c] > 1e-12 * std::max(1.0, std::abs(stats.mean[c])));
    scale[c] = flat ? 1.0 : 1.0 / stats.std[c];
  }
  const std::size_t w = ds.spec.w;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double* x = ds.inputs.data() + i * w * kLoadChannels;
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t c = 0; c < kLoadChannels; ++c) {
        double& v = x[t * kLoadChannels + c];
        v = t < ds.real[i] ? (v - stats.mean[c]) * scale[c] : 0.0;
      }
  }
  ds.normalized = true;
  ds.stats = stats;
  return ds;
}

namespace {

std::array<std::vector<std::size_t>, 2> shuffled_classes(std::span<const std::uint8_t> labels,
                                                         std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> cls;
  for (std::size_t i = 0; i < labels.size(); ++i) cls[labels[i] ? 1 : 0].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& v : cls)
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
  return cls;
}

}  // namespace

std::vector<std::uint8_t> stratified_split(std::span<const std::uint8_t> labels, double train_fraction,
                                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train fraction must be in (0, 1)");
  const auto cls = shuffled_classes(labels, seed);
  if (cls[0].empty() || cls[1].empty()) throw Error("stratified split needs both classes");
  std::vector<std::uint8_t> train(labels.size(), 0);
  for (const auto& v : cls) {
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(v.size())));
    for (std::size_t i = 0; i < n_train; ++i) train[v[i]] = 1;
  }
  return train;
}

std::vector<std::size_t> stratified_kfold(std::span<const std::uint8_t> labels, std::size_t k,
                                          std::uint64_t seed) {
  if (k < 2) throw Error("k-fold split needs k >= 2");
  const auto cls = shuffled_classes(labels, seed);
  for (const auto& v : cls)
    if (v.size() < k)
      throw Error("class with " + std::to_string(v.size()) + " brakings cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> fold(labels.size(), 0);
  std::size_t counter = 0;
  for (const auto& v : cls)
    for (const auto i : v) fold[i] = counter++ % k;
  return fold;
}

void save_windows(const std::filesystem::path& stem, const WindowedDataset& ds) {
  ds.validate();
  const std::size_t input_bytes = ds.inputs.size() * sizeof(double);
  std::string blob(input_bytes + ds.targets.size(), '\0');
  std::memcpy(blob.data(), ds.inputs.data(), input_bytes);
  std::memcpy(blob.data() + input_bytes, ds.targets.data(), ds.targets.size());
  auto bin = stem;
  bin += ".bin";
  write_file_atomic(bin, blob);

  json brakings = json::array();
  for (std::size_t b = 0; b < ds.braking_ids.size(); ++b)
    brakings.push_back({{"id", ds.braking_ids[b]}, {"squealing", ds.braking_squeal[b] != 0}});
  json j = {{"format", "squeal-windows"},
            {"version", 1},
            {"data_file", bin.filename().string()},
            {"dtype", "float64-le"},
            {"shape", {ds.size(), ds.spec.w, kLoadChannels}},
            {"target_dtype", "uint8"},
            {"target_offset", input_bytes},
            {"target_shape", ds.mode == TargetMode::Scalar ? json{ds.size()} : json{ds.size(), ds.spec.w}},
            {"mode", to_string(ds.mode)},
            {"window", to_json(ds.spec)},
            {"channels", channel_names()},
            {"normalized", ds.normalized},
            {"stats", ds.normalized ? to_json(ds.stats) : json(nullptr)},
            {"brakings", brakings},
            {"windows", {{"braking", ds.braking}, {"start", ds.start}, {"real", ds.real}}}};
  auto side = stem;
  side += ".json";
  write_json(side, j);
}

WindowedDataset load_windows(const std::filesystem::path& stem) {
  auto side = stem;
  side += ".json";
  const json j = read_json(side);
  if (j.value("format", "") != "squeal-windows") throw Error(side.string() + " is not a window sidecar");
  if (j.at("dtype") != "float64-le" || j.at("target_dtype") != "uint8")
    throw Error(side.string() + ": unsupported dtype");
  WindowedDataset ds;
  ds.spec = window_spec_from_json(j.at("window"));
  ds.mode = target_mode_from_string(j.at("mode").get<std::string>());
  ds.normalized = j.at("normalized").get<bool>();
  if (ds.normalized) ds.stats = channel_stats_from_json(j.at("stats"));
  for (const auto& b : j.at("brakings")) {
    ds.braking_ids.push_back(b.at("id").get<std::string>());
    ds.braking_squeal.push_back(b.at("squealing").get<bool>());
  }
  const auto& win = j.at("windows");
  ds.braking = win.at("braking").get<std::vector<std::uint32_t>>();
  ds.start = win.at("start").get<std::vector<std::uint32_t>>();
  ds.real = win.at("real").get<std::vector<std::uint32_t>>();
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3 || shape[0] != ds.size() || shape[1] != ds.spec.w || shape[2] != kLoadChannels)
    throw Error(side.string() + ": shape does not match provenance");

  const std::string blob = read_file(stem.parent_path() / j.at("data_file").get<std::string>());
  const std::size_t input_bytes = ds.size() * ds.spec.w * kLoadChannels * sizeof(double);
  const std::size_t target_bytes = ds.size() * ds.target_len();
  if (blob.size() != input_bytes + target_bytes || j.at("target_offset").get<std::size_t>() != input_bytes)
    throw Error(side.string() + ": data file size does not match the declared layout");
  ds.inputs.resize(input_bytes / sizeof(double));
  std::memcpy(ds.inputs.data(), blob.data(), input_bytes);
  ds.targets.assign(blob.begin() + static_cast<std::ptrdiff_t>(input_bytes), blob.end());
  ds.validate();
  return ds;
}

void export_windows_csv(const std::filesystem::path& path, const WindowedDataset& ds) {
  std::string out = "window,braking,start,step,real";
  for (const auto& n : channel_names()) out += "," + n;
  out += ",target\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double* x = ds.window(i);
    for (std::size_t t = 0; t < ds.spec.w; ++t) {
      out += std::to_string(i) + "," + ds.braking_ids[ds.braking[i]] + "," + std::to_string(ds.start[i]) + "," +
             std::to_string(t) + (t < ds.real[i] ? ",1" : ",0");
      for (std::size_t c = 0; c < kLoadChannels; ++c) out += "," + fmt_num(x[t * kLoadChannels + c]);
      const auto y = ds.mode == TargetMode::Scalar ? ds.target(i)[0] : ds.target(i)[t];
      out += y ? ",1\n" : ",0\n";
    }
  }
  write_file_atomic(path, out);
}

}  // namespace squeal
