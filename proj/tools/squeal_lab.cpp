#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "squeal/detector.hpp"
#include "squeal/synth.hpp"
#include "squeal/train.hpp"
#include "squeal/wav.hpp"

namespace fs = std::filesystem;
using namespace squeal;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kPartial = 1, kFatal = 2 };

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out = "out";
  int jobs = 0;
  std::string preset = "desk";
};

// Shared state of one invocation: resolved configuration, inputs read and
// files written, all of which end up in the run manifest.
class Run {
 public:
  Run(std::string command, const Globals& g, std::vector<std::string> argv)
      : command_(std::move(command)), g_(g), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {
    if (!g.config_path.empty()) {
      file_config_ = read_json(g.config_path);
      if (!file_config_.is_object()) throw Error("config " + g.config_path + " must be a JSON object");
    }
    out_ = g.out;
    fs::create_directories(out_);
    const auto probe = out_ / ".squeal_write_test";
    write_file_atomic(probe, "");
    fs::remove(probe);
  }

  const Globals& globals() const { return g_; }
  const fs::path& out() const { return out_; }

  json section(const std::string& name) const {
    return file_config_.contains(name) ? file_config_.at(name) : json::object();
  }
  void record_config(const std::string& name, json value) { resolved_[name] = std::move(value); }
  void record_seed(const std::string& name, std::uint64_t seed) { seeds_[name] = seed; }
  void record_input(const fs::path& p) { inputs_.push_back(p.string()); }

  fs::path path(const std::string& rel) {
    const auto p = out_ / rel;
    outputs_.push_back(rel);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }
  void write_json_file(const std::string& rel, const json& j) { write_json(path(rel), j); }
  void write_text(const std::string& rel, const std::string& s) { write_file_atomic(path(rel), s); }

  void finish(int exit_code) {
    std::sort(outputs_.begin(), outputs_.end());
    outputs_.erase(std::unique(outputs_.begin(), outputs_.end()), outputs_.end());
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"command", command_},
              {"argv", argv_},
              {"config", resolved_},
              {"seeds", seeds_},
              {"global", {{"seed", g_.seed}, {"preset", g_.preset}, {"jobs", g_.jobs}, {"out", g_.out},
                          {"config", g_.config_path}}},
              {"inputs", inputs_},
              {"outputs", outputs_},
              {"tool", "squeal-lab"},
              {"version", kVersion},
              {"exit_code", exit_code},
              {"wall_time_s", wall}};
    write_json(out_ / "manifest.json", m);
    spdlog::info("{} finished in {:.2f} s, manifest at {}", command_, wall, (out_ / "manifest.json").string());
  }

 private:
  std::string command_;
  Globals g_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  json file_config_ = json::object();
  fs::path out_;
  json resolved_ = json::object();
  json seeds_ = json::object();
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

// Explicit seeds in a config section win over the global --seed.
std::uint64_t section_seed(const json& j, std::uint64_t fallback) {
  return j.contains("seed") ? j.at("seed").get<std::uint64_t>() : fallback;
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

ConfidenceModel confidence_from_json(const json& j) {
  ConfidenceModel m;
  m.gamma_a = j.value("gamma_a", m.gamma_a);
  m.gamma_b = j.value("gamma_b", m.gamma_b);
  m.pdf_max = j.value("pdf_max", m.pdf_max);
  m.level_lo = j.value("level_lo", m.level_lo);
  m.level_hi = j.value("level_hi", m.level_hi);
  m.validate();
  return m;
}

json to_json(const ConfidenceModel& m) {
  return {{"gamma_a", m.gamma_a}, {"gamma_b", m.gamma_b}, {"pdf_max", m.pdf_max},
          {"level_lo", m.level_lo}, {"level_hi", m.level_hi}};
}

std::string opt_num(const std::optional<double>& v) { return v ? fmt_num(*v) : ""; }

std::string scene_id(std::size_t i) {
  std::string s = std::to_string(i);
  return "scene_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string scenes;
  std::size_t n = 0;
  bool pcm16 = false;
};

int cmd_synth(Run& run, const SynthArgs& a) {
  std::vector<std::pair<std::string, SceneSpec>> scenes;
  if (!a.scenes.empty()) {
    for (const auto& p : files_with_extension(a.scenes, ".json")) {
      run.record_input(p);
      auto j = read_json(p);
      if (!j.contains("seed")) j["seed"] = mix_seed(run.globals().seed, hash_string(p.stem().string()));
      scenes.emplace_back(p.stem().string(), scene_spec_from_json(j));
    }
    if (scenes.empty()) throw Error("no scene configs (*.json) in " + a.scenes);
  } else {
    auto cj = run.section("corpus");
    cj["seed"] = section_seed(cj, run.globals().seed);
    if (a.n > 0) cj["n_scenes"] = a.n;
    const auto corpus = corpus_spec_from_json(cj);
    run.record_config("corpus", to_json(corpus));
    run.record_seed("corpus", corpus.seed);
    for (std::size_t i = 0; i < corpus.n_scenes; ++i) scenes.emplace_back(scene_id(i), random_scene(corpus, i));
  }

  std::vector<ImageAnnotation> images(scenes.size());
  std::vector<Scene> rendered(scenes.size());
  const auto n = static_cast<std::ptrdiff_t>(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) rendered[static_cast<std::size_t>(i)] = render_scene(scenes[static_cast<std::size_t>(i)].second);

  std::map<std::string, std::size_t> class_counts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& [id, spec] = scenes[i];
    write_wav(run.path(id + ".wav"), rendered[i].audio, a.pcm16 ? WavFormat::Pcm16 : WavFormat::Float32);
    images[i] = rendered[i].annotation.to_image(id);
    json ann = to_json(images[i]);
    ann["scene"] = to_json(spec);
    run.write_json_file(id + ".json", ann);
    for (const auto& b : images[i].boxes) ++class_counts[to_string(b.cls)];
  }
  run.write_json_file("annotations.json", [&] {
    json arr = json::array();
    for (const auto& im : images) arr.push_back(to_json(im));
    return arr;
  }());
  run.write_json_file("corpus_summary.json", {{"scenes", scenes.size()}, {"boxes_per_class", class_counts}});
  spdlog::info("rendered {} scenes into {}", scenes.size(), run.out().string());
  return kOk;
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  std::string wavs;
};

int cmd_detect(Run& run, const DetectArgs& a) {
  const auto dj = run.section("detector");
  const auto cfg = detector_config_from_json(dj);
  const auto conf = confidence_from_json(run.section("confidence"));
  const double half_width = run.section("detect").value("box_half_width", 100.0);
  run.record_config("detector", to_json(cfg));
  run.record_config("confidence", to_json(conf));
  run.record_config("detect", {{"box_half_width", half_width}});

  const auto files = files_with_extension(a.wavs, ".wav");
  if (files.empty()) throw Error("no WAV files in " + a.wavs);
  struct Outcome {
    std::vector<SquealEvent> events;
    std::string error;
    double seconds = 0.0, duration = 0.0;
  };
  std::vector<Outcome> res(files.size());
  const auto n = static_cast<std::ptrdiff_t>(files.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& r = res[static_cast<std::size_t>(i)];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto rec = read_wav(files[static_cast<std::size_t>(i)]);
      r.duration = rec.duration();
      r.events = detect_squeal(rec, cfg, conf);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  json aggregate = json::array(), errors = json::array();
  std::size_t failed = 0;
  double total_time = 0.0, total_audio = 0.0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    run.record_input(files[i]);
    const auto id = files[i].stem().string();
    const auto& r = res[i];
    spdlog::debug("{}: {} events in {:.3f} s", id, r.events.size(), r.seconds);
    if (!r.error.empty()) {
      ++failed;
      spdlog::error("{}: {}", id, r.error);
      errors.push_back({{"image_id", id}, {"error", r.error}});
      continue;
    }
    total_time += r.seconds;
    total_audio += r.duration;
    json events = json::array();
    ImageAnnotation im{id, {}};
    for (const auto& e : r.events) {
      events.push_back(to_json(e));
      im.boxes.push_back(to_bbox(e, half_width));
    }
    run.write_json_file(id + ".detections.json", {{"image_id", id}, {"events", events}});
    aggregate.push_back(to_json(im));
  }
  run.write_json_file("detections.json", aggregate);
  run.write_json_file("errors.json", errors);
  if (total_audio > 0.0)
    spdlog::info("{} files, {:.3f} s per 10 s of audio", files.size() - failed, 10.0 * total_time / total_audio);
  if (failed == files.size()) return kFatal;
  return failed ? kPartial : kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string gt, pred;
  std::vector<double> iou{0.5, 0.75, 0.9};
  std::vector<double> c_min;
  std::string ap_mode = "all";
};

int cmd_eval(Run& run, const EvalArgs& a) {
  const auto gt = read_annotations(a.gt);
  const auto pred = read_annotations(a.pred);
  run.record_input(a.gt);
  run.record_input(a.pred);
  const ApMode mode = a.ap_mode == "11" ? ApMode::ElevenPoint : ApMode::AllPoints;
  std::vector<double> grid = a.c_min;
  if (grid.empty())
    for (int k = 0; k <= 20; ++k) grid.push_back(0.5 + 0.025 * k);
  run.record_config("eval", {{"iou", a.iou}, {"c_min", grid}, {"ap_mode", a.ap_mode}});

  std::string metrics = "iou,class,n_gt,tp,fp,fn,precision,recall,f1,ap\n";
  std::string prc = "iou,class,confidence,precision,recall\n";
  std::string sweep = "iou,c_min,class,tp,fp,fn,tn,precision,recall,f1\n";
  json summary = json::object();
  for (const double iou_min : a.iou) {
    const auto rep = evaluate_corpus(gt, pred, iou_min, 0.0, mode);
    for (const auto& c : rep.classes) {
      const auto& d = c.detection;
      metrics += fmt_num(iou_min) + "," + to_string(c.cls) + "," + std::to_string(c.curve.n_gt) + "," +
                 std::to_string(d.tp) + "," + std::to_string(d.fp) + "," + std::to_string(d.fn) + "," +
                 opt_num(c.detection_metrics.precision) + "," + opt_num(c.detection_metrics.recall) + "," +
                 opt_num(c.detection_metrics.f1) + "," + fmt_num(c.ap) + "\n";
      for (const auto& p : c.curve.points)
        prc += fmt_num(iou_min) + "," + to_string(c.cls) + "," + fmt_num(p.confidence) + "," + fmt_num(p.precision) +
               "," + fmt_num(p.recall) + "\n";
    }
    const auto sw = confidence_sweep(gt, pred, iou_min, grid);
    for (const auto& pt : sw)
      for (const auto& c : pt.report.classes) {
        const auto& k = c.classification;
        sweep += fmt_num(iou_min) + "," + fmt_num(pt.c_min) + "," + to_string(c.cls) + "," + std::to_string(k.tp) +
                 "," + std::to_string(k.fp) + "," + std::to_string(k.fn) + "," + std::to_string(k.tn) + "," +
                 opt_num(c.classification_metrics.precision) + "," + opt_num(c.classification_metrics.recall) + "," +
                 opt_num(c.classification_metrics.f1) + "\n";
      }
    summary[fmt_num(iou_min)] = {{"map", rep.map}, {"best_c_min", best_operating_point(sw)}};
    spdlog::info("IoU {}: mAP {:.4f}", iou_min, rep.map);
  }
  run.write_text("metrics.csv", metrics);
  run.write_text("prc.csv", prc);
  run.write_text("sweep.csv", sweep);
  run.write_json_file("summary.json", summary);
  return kOk;
}

// ---------------------------------------------------------------- gen-loads

struct GenArgs {
  std::string system = "A";
  std::size_t n = 0;
  double target = -1.0;
};

int cmd_gen_loads(Run& run, const GenArgs& a) {
  auto sj = run.section("system");
  if (!sj.contains("preset") && !sj.contains("name")) sj["preset"] = a.system;
  const auto spec = system_spec_from_json(sj);
  const auto lj = run.section("loads");
  const std::size_t n = a.n ? a.n : lj.value("n", std::size_t{1206});
  const double target = a.target >= 0.0 ? a.target : lj.value("target", 0.4);
  const double stop_fraction = lj.value("stop_fraction", 0.5);
  const auto seed = section_seed(lj, run.globals().seed);
  run.record_config("system", to_json(spec));
  run.record_config("loads", {{"n", n}, {"target", target}, {"stop_fraction", stop_fraction}, {"seed", seed}});
  run.record_seed("loads", seed);

  const auto ds = generate_dataset(spec, n, target, seed, stop_fraction);
  write_dataset(run.out(), ds);
  for (const auto& b : ds.brakings) run.path(b.id + ".csv");
  run.path("summary.json");
  spdlog::info("{} brakings, {} squealing, {} candidates", ds.summary.n, ds.summary.n_squeal, ds.summary.attempts);
  return kOk;
}

// ---------------------------------------------------------------- shared model plumbing

TargetMode mode_arg(const std::string& s) { return target_mode_from_string(s); }

ModelConfig resolve_model(Run& run, TargetMode mode) {
  auto mj = run.section("model");
  if (!mj.contains("preset")) mj["preset"] = run.globals().preset;
  if (!mj.contains("mode")) mj["mode"] = to_string(mode);
  const auto cfg = model_config_from_json(mj);
  run.record_config("model", to_json(cfg));
  return cfg;
}

TrainConfig resolve_train(Run& run, std::size_t epochs) {
  auto tj = run.section("train");
  if (!tj.contains("preset")) tj["preset"] = run.globals().preset;
  tj["seed"] = section_seed(tj, run.globals().seed);
  auto cfg = train_config_from_json(tj);
  if (epochs) cfg.epochs = epochs;
  run.record_config("train", to_json(cfg));
  return cfg;
}

Dataset load_dataset(Run& run, const std::string& dir) {
  auto ds = read_dataset(dir);
  run.record_input(dir);
  if (ds.brakings.empty()) throw Error("no brakings in " + dir);
  return ds;
}

std::string history_csv(std::span<const EpochRecord> h) {
  std::string out = "epoch,train_loss,train_mcc,val_loss,val_mcc\n";
  for (const auto& r : h)
    out += std::to_string(r.epoch) + "," + fmt_num(r.train_loss) + "," + fmt_num(r.train_mcc) + "," +
           fmt_num(r.val_loss) + "," + fmt_num(r.val_mcc) + "\n";
  return out;
}

void log_epoch(const std::string& tag, const EpochRecord& r) {
  spdlog::info("{} epoch {:3d}  loss {:.4f}  mcc {:.4f}  val_loss {:.4f}  val_mcc {:.4f}", tag, r.epoch,
               r.train_loss, r.train_mcc, r.val_loss, r.val_mcc);
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double std_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------- preprocess

struct PreArgs {
  std::string data;
  std::string mode = "scalar";
  bool csv = false;
};

int cmd_preprocess(Run& run, const PreArgs& a) {
  const auto ds = load_dataset(run, a.data);
  const auto cfg = resolve_model(run, mode_arg(a.mode));
  const auto raw = build_windows(ds.brakings, cfg.window, cfg.mode);
  save_windows(run.path("windows.bin").replace_extension(), raw);
  run.path("windows.json");
  if (a.csv) export_windows_csv(run.path("windows.csv"), raw);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < raw.size(); ++i)
    pos += std::any_of(raw.target(i), raw.target(i) + raw.target_len(), [](std::uint8_t v) { return v != 0; });
  spdlog::info("{} windows of {} samples, {} with squeal", raw.size(), raw.w(), pos);
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string mode = "scalar";
  std::size_t repeats = 1;
  std::size_t epochs = 0;
  double train_fraction = 0.7;
};

int cmd_train(Run& run, const TrainArgs& a) {
  const auto ds = load_dataset(run, a.data);
  const auto cfg = resolve_model(run, mode_arg(a.mode));
  const auto base = resolve_train(run, a.epochs);
  run.record_config("split", {{"train_fraction", a.train_fraction}, {"repeats", a.repeats}});
  const auto raw = build_windows(ds.brakings, cfg.window, cfg.mode);
  spdlog::info("{} windows from {} brakings, {} parameters", raw.size(), ds.brakings.size(), cfg.n_params());

  std::string results = "repeat,split_seed,train_seed,val_loss,val_mcc,epochs\n";
  std::vector<double> mccs;
  for (std::size_t r = 0; r < a.repeats; ++r) {
    auto tcfg = base;
    const auto split_seed = mix_seed(base.seed, 2 * r);
    tcfg.seed = mix_seed(base.seed, 2 * r + 1);
    run.record_seed("split_" + std::to_string(r), split_seed);
    run.record_seed("train_" + std::to_string(r), tcfg.seed);
    const std::string tag = "repeat " + std::to_string(r);
    const auto sr = train_on_split(cfg, tcfg, raw, a.train_fraction, split_seed,
                                   [&](const EpochRecord& e) { log_epoch(tag, e); });
    const std::string stem = "model_" + std::to_string(r);
    json extra = {{"split_seed", split_seed}, {"train_fraction", a.train_fraction}, {"train", to_json(tcfg)},
                  {"dataset", a.data}};
    save_model(run.path(stem + ".bin").replace_extension(), sr.result.model, extra);
    run.path(stem + ".json");
    run.write_text("history_" + std::to_string(r) + ".csv", history_csv(sr.result.history));
    results += std::to_string(r) + "," + std::to_string(split_seed) + "," + std::to_string(tcfg.seed) + "," +
               fmt_num(sr.validation.loss) + "," + fmt_num(sr.validation.mcc) + "," +
               std::to_string(sr.result.history.size()) + "\n";
    mccs.push_back(sr.validation.mcc);
  }
  run.write_text("results.csv", results);
  run.write_json_file("summary.json", {{"val_mcc", mccs}, {"mean", mean_of(mccs)}, {"std", std_of(mccs)},
                                       {"repeats", a.repeats}, {"mode", to_string(cfg.mode)}});
  spdlog::info("validation MCC {:.2f} ± {:.2f} over {} repeat(s)", mean_of(mccs), std_of(mccs), a.repeats);
  return kOk;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model;
  std::string data;
  bool traces = false;
};

int cmd_predict(Run& run, const PredictArgs& a) {
  auto stem = fs::path(a.model);
  if (stem.extension() == ".json" || stem.extension() == ".bin") stem.replace_extension();
  const auto model = load_model(stem);
  run.record_input(stem.string() + ".json");
  run.record_config("model", to_json(model.config));
  const auto ds = load_dataset(run, a.data);

  std::string table = "braking,squeal,predicted,onset,predicted_onset\n";
  ConfusionCounts braking_counts, step_counts;
  std::vector<double> onset_err;
  std::size_t failed = 0;
  for (const auto& b : ds.brakings) {
    BrakingPrediction p;
    try {
      p = predict_braking(model, b);
    } catch (const Error& e) {
      spdlog::warn("{}: {}", b.id, e.what());
      ++failed;
      continue;
    }
    const bool truth = b.squealing();
    if (p.squeal && truth) ++braking_counts.tp;
    else if (p.squeal) ++braking_counts.fp;
    else if (truth) ++braking_counts.fn;
    else ++braking_counts.tn;
    for (std::size_t t = 0; t < b.size(); ++t) {
      const bool pt = p.labels[t] != 0, yt = b.labels[t] != 0;
      if (pt && yt) ++step_counts.tp;
      else if (pt) ++step_counts.fp;
      else if (yt) ++step_counts.fn;
      else ++step_counts.tn;
    }
    if (truth) onset_err.push_back(p.onset < 0.0 ? INFINITY : std::abs(p.onset - b.onset()));
    table += b.id + "," + (truth ? "1" : "0") + "," + (p.squeal ? "1" : "0") + "," +
             (truth ? fmt_num(b.onset()) : "") + "," + (p.onset >= 0.0 ? fmt_num(p.onset) : "") + "\n";
    if (a.traces) {
      std::string tr = "t,propensity,predicted,squeal\n";
      for (std::size_t t = 0; t < b.size(); ++t)
        tr += fmt_num(static_cast<double>(t) / b.fs) + "," + fmt_num(p.propensity[t]) + "," +
              (p.labels[t] ? "1" : "0") + "," + (b.labels[t] ? "1" : "0") + "\n";
      run.write_text("traces/" + b.id + ".csv", tr);
    }
  }
  run.write_text("predictions.csv", table);
  json summary = {{"braking_mcc", mcc(braking_counts)}, {"timestep_mcc", mcc(step_counts)},
                  {"brakings", ds.brakings.size() - failed}, {"failed", failed}};
  if (!onset_err.empty()) {
    auto sorted = onset_err;
    std::sort(sorted.begin(), sorted.end());
    const double med = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                         : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    summary["median_onset_error_s"] = std::isfinite(med) ? json(med) : json("inf");
  }
  run.write_json_file("summary.json", summary);
  spdlog::info("braking MCC {:.3f}, time-step MCC {:.3f}", mcc(braking_counts), mcc(step_counts));
  if (failed == ds.brakings.size()) return kFatal;
  return failed ? kPartial : kOk;
}

// ---------------------------------------------------------------- crosseval

struct CrossArgs {
  std::vector<std::string> data;
  std::string mode = "scalar";
  std::size_t epochs = 0;
  double train_fraction = 0.7;
  bool pooled = true;
};

int cmd_crosseval(Run& run, const CrossArgs& a) {
  const auto cfg = resolve_model(run, mode_arg(a.mode));
  const auto base = resolve_train(run, a.epochs);
  run.record_config("split", {{"train_fraction", a.train_fraction}});
  std::vector<std::string> names;
  std::vector<WindowedDataset> raws;
  for (const auto& d : a.data) {
    const auto ds = load_dataset(run, d);
    names.push_back(ds.summary.system.empty() ? fs::path(d).filename().string() : ds.summary.system);
    raws.push_back(build_windows(ds.brakings, cfg.window, cfg.mode));
  }

  std::vector<CrossModel> models;
  for (std::size_t i = 0; i < raws.size(); ++i) {
    auto tcfg = base;
    const auto split_seed = mix_seed(base.seed, 2 * i);
    tcfg.seed = mix_seed(base.seed, 2 * i + 1);
    const auto sr = train_on_split(cfg, tcfg, raws[i], a.train_fraction, split_seed,
                                   [&](const EpochRecord& e) { log_epoch(names[i], e); });
    save_model(run.path("model_" + names[i] + ".bin").replace_extension(), sr.result.model,
               {{"split_seed", split_seed}, {"dataset", a.data[i]}});
    run.path("model_" + names[i] + ".json");
    run.write_text("history_" + names[i] + ".csv", history_csv(sr.result.history));
    models.push_back({names[i], sr.result.model, i, sr.train_brakings});
  }

  if (a.pooled && raws.size() > 1) {
    WindowedDataset all = raws[0];
    for (std::size_t i = 1; i < raws.size(); ++i) {
      const auto& r = raws[i];
      const auto offset = static_cast<std::uint32_t>(all.braking_ids.size());
      all.inputs.insert(all.inputs.end(), r.inputs.begin(), r.inputs.end());
      all.targets.insert(all.targets.end(), r.targets.begin(), r.targets.end());
      for (auto b : r.braking) all.braking.push_back(b + offset);
      all.start.insert(all.start.end(), r.start.begin(), r.start.end());
      all.real.insert(all.real.end(), r.real.begin(), r.real.end());
      all.braking_ids.insert(all.braking_ids.end(), r.braking_ids.begin(), r.braking_ids.end());
      all.braking_squeal.insert(all.braking_squeal.end(), r.braking_squeal.begin(), r.braking_squeal.end());
    }
    auto tcfg = base;
    const auto split_seed = mix_seed(base.seed, 2 * raws.size());
    tcfg.seed = mix_seed(base.seed, 2 * raws.size() + 1);
    const auto sr = train_on_split(cfg, tcfg, all, a.train_fraction, split_seed,
                                   [&](const EpochRecord& e) { log_epoch("all", e); });
    save_model(run.path("model_all.bin").replace_extension(), sr.result.model, {{"split_seed", split_seed}});
    run.path("model_all.json");
    run.write_text("history_all.csv", history_csv(sr.result.history));
    models.push_back({"all", sr.result.model, raws.size(), sr.train_brakings});
  }

  const auto m = cross_evaluate(models, raws);
  std::string csv = "model";
  for (const auto& n : names) csv += "," + n;
  csv += "\n";
  for (std::size_t i = 0; i < models.size(); ++i) {
    csv += models[i].name;
    for (double v : m[i]) csv += "," + fmt_num(v);
    csv += "\n";
  }
  run.write_text("mcc_matrix.csv", csv);
  spdlog::info("cross-evaluation matrix written to {}", (run.out() / "mcc_matrix.csv").string());
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
  std::size_t configs = 20;
  double tolerance = 1e-4;
};

int cmd_gradcheck(Run& run, const GradArgs& a) {
  std::mt19937_64 rng(run.globals().seed);
  run.record_seed("gradcheck", run.globals().seed);
  run.record_config("gradcheck", {{"configs", a.configs}, {"tolerance", a.tolerance}});
  std::string csv = "config,mode,n_inputs,n_units,dense_units,w,max_rel_error,worst_index,n_checked\n";
  double worst = 0.0;
  for (std::size_t k = 0; k < a.configs; ++k) {
    ModelConfig c;
    c.mode = k % 2 ? TargetMode::Sequence : TargetMode::Scalar;
    c.n_inputs = 1 + rng() % 4;
    c.n_units = 1 + rng() % 8;
    c.dense_units = 1 + rng() % 8;
    c.dropout = 0.0;
    c.window = {2 + rng() % 19, 1};
    const auto r = gradient_check(c, mix_seed(run.globals().seed, k));
    worst = std::max(worst, r.max_rel_error);
    csv += std::to_string(k) + "," + to_string(c.mode) + "," + std::to_string(c.n_inputs) + "," +
           std::to_string(c.n_units) + "," + std::to_string(c.dense_units) + "," + std::to_string(c.window.w) + "," +
           fmt_num(r.max_rel_error) + "," + std::to_string(r.worst_index) + "," + std::to_string(r.n_checked) + "\n";
  }
  run.write_text("gradcheck.csv", csv);
  run.write_json_file("summary.json", {{"max_rel_error", worst}, {"tolerance", a.tolerance}, {"pass", worst < a.tolerance}});
  spdlog::info("worst relative error {:.3g} over {} configs", worst, a.configs);
  return worst < a.tolerance ? kOk : kPartial;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("squeal-lab");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("SQUEAL_LAB_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  std::vector<std::string> args(argv, argv + argc);

  CLI::App app{"Brake squeal lab: synthetic corpora, spectral detection, evaluation and LSTM squeal prediction"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream not fixed in the config");
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--preset", g.preset, "Model and training preset")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Render scenes to WAV plus ground-truth boxes");
  s_synth->add_option("--scenes", synth.scenes, "Directory of scene configs; random corpus when omitted");
  s_synth->add_option("--n", synth.n, "Number of random scenes (overrides corpus.n_scenes)");
  s_synth->add_flag("--pcm16", synth.pcm16, "Write 16-bit PCM instead of float");

  DetectArgs detect;
  auto* s_detect = app.add_subcommand("detect", "Spectral squeal detection on a directory of WAVs");
  s_detect->add_option("--wavs", detect.wavs, "Directory of WAV files")->required();

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Detection metrics, PR curves and confidence sweep");
  s_eval->add_option("--gt", ev.gt, "Ground-truth annotations JSON")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--pred", ev.pred, "Predicted annotations JSON")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--iou", ev.iou, "IoU thresholds")->capture_default_str();
  s_eval->add_option("--cmin", ev.c_min, "Confidence thresholds for the sweep (default 0.5..1 step 0.025)");
  s_eval->add_option("--ap", ev.ap_mode, "AP interpolation")->check(CLI::IsMember({"all", "11"}))->capture_default_str();

  GenArgs gen;
  auto* s_gen = app.add_subcommand("gen-loads", "Generate a synthetic braking dataset");
  s_gen->add_option("--system", gen.system, "System preset A, B, C or D")->capture_default_str();
  s_gen->add_option("--n", gen.n, "Number of brakings (default loads.n or 1206)");
  s_gen->add_option("--target", gen.target, "Fraction of squealing brakings (default loads.target or 0.4)");

  PreArgs pre;
  auto* s_pre = app.add_subcommand("preprocess", "Slice a braking dataset into windows");
  s_pre->add_option("--data", pre.data, "Dataset directory")->required();
  s_pre->add_option("--mode", pre.mode, "scalar or sequence")->capture_default_str();
  s_pre->add_flag("--csv", pre.csv, "Also export the windows as CSV");

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train on a stratified braking-level split");
  s_train->add_option("--data", tr.data, "Dataset directory")->required();
  s_train->add_option("--mode", tr.mode, "scalar or sequence")->capture_default_str();
  s_train->add_option("--repeats", tr.repeats, "Independent splits")->check(CLI::PositiveNumber)->capture_default_str();
  s_train->add_option("--epochs", tr.epochs, "Override the configured epoch count");
  s_train->add_option("--train-fraction", tr.train_fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();

  PredictArgs pr;
  auto* s_pred = app.add_subcommand("predict", "Per-braking verdicts, propensities and onsets");
  s_pred->add_option("--model", pr.model, "Model stem (path without .json/.bin)")->required();
  s_pred->add_option("--data", pr.data, "Dataset directory")->required();
  s_pred->add_flag("--traces", pr.traces, "Write per-braking propensity traces");

  CrossArgs cr;
  auto* s_cross = app.add_subcommand("crosseval", "Train one model per dataset and score every pairing");
  s_cross->add_option("--data", cr.data, "Dataset directories")->required()->expected(1, -1);
  s_cross->add_option("--mode", cr.mode, "scalar or sequence")->capture_default_str();
  s_cross->add_option("--epochs", cr.epochs, "Override the configured epoch count");
  s_cross->add_option("--train-fraction", cr.train_fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  s_cross->add_flag("!--no-pooled", cr.pooled, "Skip the model trained on all datasets");

  GradArgs gc;
  auto* s_grad = app.add_subcommand("gradcheck", "Finite-difference check of the LSTM gradients");
  s_grad->add_option("--configs", gc.configs, "Random small configs")->capture_default_str();
  s_grad->add_option("--tolerance", gc.tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFatal;
  }
  if (g.jobs > 0) omp_set_num_threads(g.jobs);

  const auto* sub = app.get_subcommands().front();
  int code = kFatal;
  try {
    Run run(sub->get_name(), g, args);
    if (sub == s_synth) code = cmd_synth(run, synth);
    else if (sub == s_detect) code = cmd_detect(run, detect);
    else if (sub == s_eval) code = cmd_eval(run, ev);
    else if (sub == s_gen) code = cmd_gen_loads(run, gen);
    else if (sub == s_pre) code = cmd_preprocess(run, pre);
    else if (sub == s_train) code = cmd_train(run, tr);
    else if (sub == s_pred) code = cmd_predict(run, pr);
    else if (sub == s_cross) code = cmd_crosseval(run, cr);
    else if (sub == s_grad) code = cmd_gradcheck(run, gc);
    run.finish(code);
  } catch (const std::exception& e) {
    spdlog::critical("{}", e.what());
    return kFatal;
  }
  return code;
}
