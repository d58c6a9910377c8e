#include "squeal/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace squeal {

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  if (name == "paper")
    c.batch = 256;
  else if (name == "desk")
    c.batch = 64;
  else
    throw Error("unknown preset '" + name + "' (expected desk or paper)");
  return c;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("train: learning rate must be finite and non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw Error("train: betas must be in [0, 1)");
  if (!(eps > 0.0)) throw Error("train: eps must be positive");
  if (batch < 1) throw Error("train: batch size must be at least 1");
  if (!(clip_norm >= 0.0)) throw Error("train: clip_norm must be non-negative");
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},       {"beta1", c.beta1},   {"beta2", c.beta2},
          {"eps", c.eps},     {"batch", c.batch},   {"epochs", c.epochs},
          {"seed", c.seed},   {"patience", c.patience}, {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c = j.contains("preset") ? TrainConfig::preset(j.at("preset").get<std::string>()) : TrainConfig{};
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.patience = j.value("patience", c.patience);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

Adam::Adam(const TrainConfig& cfg, std::size_t n)
    : lr_(cfg.lr), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> theta, std::span<const double> grad) {
  if (theta.size() != m_.size() || grad.size() != m_.size()) throw Error("adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * grad[k];
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * grad[k] * grad[k];
    theta[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

namespace {

void count_outputs(const kernels::NetShape& s, std::span<const kernels::Sample> batch, std::span<const double> prob,
                   ConfusionCounts& c) {
  const std::size_t n_out = s.outputs();
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const std::size_t len = s.sequence ? batch[n].real : 1;
    for (std::size_t t = 0; t < len; ++t) {
      const bool pred = prob[n * n_out + t] >= 0.5;
      const bool truth = batch[n].y[t] != 0;
      if (pred && truth) ++c.tp;
      else if (pred) ++c.fp;
      else if (truth) ++c.fn;
      else ++c.tn;
    }
  }
}

double bce_sum(const kernels::NetShape& s, std::span<const kernels::Sample> batch, std::span<const double> prob,
               std::size_t& count) {
  double sum = 0.0;
  const std::size_t n_out = s.outputs();
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const std::size_t len = s.sequence ? batch[n].real : 1;
    for (std::size_t t = 0; t < len; ++t) {
      const double p = std::clamp(prob[n * n_out + t], kernels::kBceEps, 1.0 - kernels::kBceEps);
      sum += batch[n].y[t] ? -std::log(p) : -std::log(1.0 - p);
      ++count;
    }
  }
  return sum;
}

}  // namespace

TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg, const WindowedDataset& train_set,
                  const WindowedDataset* val_set, const EpochCallback& on_epoch) {
  cfg.validate();
  tcfg.validate();
  if (train_set.size() == 0) throw Error("train: empty training set");
  TrainResult res;
  res.model = init_model(cfg, tcfg.seed);
  res.model.stats = train_set.stats;
  auto& theta = res.model.theta;
  const auto shape = cfg.shape();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto all = make_batch(cfg, train_set, order);
  if (val_set) make_batch(cfg, *val_set, std::vector<std::size_t>{});

  Adam adam(tcfg, theta.size());
  std::mt19937_64 rng(mix_seed(tcfg.seed, hash_string("train")));
  const double scale = 1.0 / (1.0 - cfg.dropout);
  const auto threshold = static_cast<std::uint64_t>(std::llround(cfg.dropout * 65536.0));
  std::vector<std::uint8_t> keep(tcfg.batch * shape.keep_len());
  std::vector<kernels::Sample> batch;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    std::size_t count = 0;
    ConfusionCounts counts;
    for (std::size_t lo = 0; lo < order.size(); lo += tcfg.batch) {
      const std::size_t hi = std::min(order.size(), lo + tcfg.batch);
      batch.clear();
      for (std::size_t k = lo; k < hi; ++k) {
        auto x = all[order[k]];
        if (cfg.dropout > 0.0) {
          std::uint8_t* mask = keep.data() + (k - lo) * shape.keep_len();
          std::uint64_t bits = 0;
          for (std::size_t j = 0; j < shape.keep_len(); ++j) {
            if (j % 4 == 0) bits = rng();
            mask[j] = (bits & 0xFFFF) >= threshold;
            bits >>= 16;
          }
          x.keep = mask;
        }
        batch.push_back(x);
      }
      auto r = kernels::loss_grad_omp(shape, theta, batch, scale);
      if (!std::isfinite(r.loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << ", batch starting at " << lo
            << " (lr " << tcfg.lr << ", " << adam.steps() << " steps taken)";
        throw Error(msg.str());
      }
      const double inv = 1.0 / static_cast<double>(r.count);
      double norm = 0.0;
      for (auto& g : r.grad) {
        g *= inv;
        norm += g * g;
      }
      norm = std::sqrt(norm);
      if (tcfg.clip_norm > 0.0 && norm > tcfg.clip_norm)
        for (auto& g : r.grad) g *= tcfg.clip_norm / norm;
      adam.step(theta, r.grad);
      loss_sum += r.loss;
      count += r.count;
      count_outputs(shape, batch, r.prob, counts);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(count);
    rec.train_mcc = mcc(counts);
    rec.val_loss = rec.val_mcc = std::numeric_limits<double>::quiet_NaN();
    if (val_set && val_set->size() > 0) {
      const auto e = evaluate(res.model, *val_set);
      rec.val_loss = e.loss;
      rec.val_mcc = e.mcc;
    }
    res.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (tcfg.patience > 0 && std::isfinite(rec.val_mcc)) {
      if (rec.val_mcc > best) {
        best = rec.val_mcc;
        since_best = 0;
      } else if (++since_best >= tcfg.patience) {
        res.stopped_early = true;
        break;
      }
    }
  }
  return res;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::string out = "epoch,train_loss,train_mcc,val_loss,val_mcc\n";
  for (const auto& r : history)
    out += std::to_string(r.epoch) + "," + fmt_num(r.train_loss) + "," + fmt_num(r.train_mcc) + "," +
           fmt_num(r.val_loss) + "," + fmt_num(r.val_mcc) + "\n";
  write_file_atomic(path, out);
}

EvalResult evaluate(const Model& model, const WindowedDataset& ds) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return evaluate(model, ds, all);
}

EvalResult evaluate(const Model& model, const WindowedDataset& ds, std::span<const std::size_t> windows) {
  const auto batch = make_batch(model.config, ds, windows);
  const auto shape = model.config.shape();
  EvalResult e;
  if (batch.empty()) return e;
  e.prob = kernels::forward_omp(shape, model.theta, batch);
  std::size_t count = 0;
  e.loss = bce_sum(shape, batch, e.prob, count) / static_cast<double>(count);
  count_outputs(shape, batch, e.prob, e.counts);
  e.mcc = mcc(e.counts);
  return e;
}

BrakingPrediction predict_braking(const Model& model, const LoadSequence& seq) {
  const auto& spec = model.config.window;
  const std::size_t n = seq.size(), w = spec.w;
  if (seq.data.size() != n * kLoadChannels) throw Error("predict_braking: channel length mismatch");
  if (2 * n <= w)
    throw Error("predict_braking: braking " + seq.id + " has " + std::to_string(n) + " samples, need more than " +
                std::to_string(w / 2));
  auto ranges = window_ranges(n, spec);
  std::size_t covered = 0;
  for (const auto& r : ranges) covered = std::max(covered, r.start + r.real);
  if (covered < n && n >= w) ranges.push_back({n - w, w});

  WindowedDataset ds;
  ds.spec = spec;
  ds.mode = model.config.mode;
  ds.braking_ids = {seq.id};
  ds.braking_squeal = {static_cast<std::uint8_t>(seq.squealing())};
  ds.inputs.assign(ranges.size() * w * kLoadChannels, 0.0);
  ds.targets.assign(ranges.size() * ds.target_len(), 0);
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    std::copy_n(seq.data.begin() + static_cast<std::ptrdiff_t>(ranges[i].start * kLoadChannels),
                ranges[i].real * kLoadChannels, ds.inputs.begin() + static_cast<std::ptrdiff_t>(i * w * kLoadChannels));
    ds.braking.push_back(0);
    ds.start.push_back(static_cast<std::uint32_t>(ranges[i].start));
    ds.real.push_back(static_cast<std::uint32_t>(ranges[i].real));
  }
  ds = normalize(std::move(ds), model.stats);
  const auto e = evaluate(model, ds);

  BrakingPrediction out;
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> hits(n, 0);
  const std::size_t n_out = model.config.shape().outputs();
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double* p = e.prob.data() + i * n_out;
    if (model.config.mode == TargetMode::Scalar && p[0] >= 0.5) out.squeal = true;
    for (std::size_t t = 0; t < ranges[i].real; ++t) {
      sum[ranges[i].start + t] += model.config.mode == TargetMode::Scalar ? p[0] : p[t];
      ++hits[ranges[i].start + t];
    }
  }
  out.propensity.resize(n);
  out.labels.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    out.propensity[t] = sum[t] / static_cast<double>(hits[t]);
    out.labels[t] = out.propensity[t] >= 0.5;
    if (out.labels[t] && out.onset < 0.0) out.onset = static_cast<double>(t) / seq.fs;
  }
  if (model.config.mode == TargetMode::Sequence) out.squeal = out.onset >= 0.0;
  return out;
}

std::vector<double> onset_errors(const Model& model, std::span<const LoadSequence> brakings) {
  std::vector<double> err;
  for (const auto& b : brakings) {
    if (!b.squealing()) continue;
    const auto p = predict_braking(model, b);
    err.push_back(p.onset < 0.0 ? std::numeric_limits<double>::infinity() : std::abs(p.onset - b.onset()));
  }
  return err;
}

ConfusionCounts timestep_counts(const Model& model, std::span<const LoadSequence> brakings) {
  ConfusionCounts c;
  for (const auto& b : brakings) {
    const auto p = predict_braking(model, b);
    for (std::size_t t = 0; t < b.size(); ++t) {
      const bool pred = p.labels[t] != 0, truth = b.labels[t] != 0;
      if (pred && truth) ++c.tp;
      else if (pred) ++c.fp;
      else if (truth) ++c.fn;
      else ++c.tn;
    }
  }
  return c;
}

SplitRun train_on_split(const ModelConfig& cfg, const TrainConfig& tcfg, const WindowedDataset& raw,
                        double train_fraction, std::uint64_t split_seed, const EpochCallback& on_epoch) {
  if (raw.normalized) throw Error("train_on_split: expects raw windows");
  SplitRun run;
  run.train_brakings = stratified_split(raw.braking_squeal, train_fraction, split_seed);
  std::vector<std::uint8_t> val(run.train_brakings.size());
  for (std::size_t b = 0; b < val.size(); ++b) val[b] = !run.train_brakings[b];
  const auto tw = raw.windows_of(run.train_brakings);
  const auto vw = raw.windows_of(val);
  const auto stats = compute_stats(raw, tw);
  const auto train_set = normalize(raw.subset(tw), stats);
  const auto val_set = normalize(raw.subset(vw), stats);
  run.result = train(cfg, tcfg, train_set, &val_set, on_epoch);
  run.validation = evaluate(run.result.model, val_set);
  return run;
}

std::vector<std::vector<double>> cross_evaluate(std::span<const CrossModel> models,
                                                std::span<const WindowedDataset> raw_datasets) {
  std::vector<std::size_t> offset(raw_datasets.size() + 1, 0);
  for (std::size_t j = 0; j < raw_datasets.size(); ++j)
    offset[j + 1] = offset[j] + raw_datasets[j].braking_ids.size();
  std::vector<std::vector<double>> out(models.size(), std::vector<double>(raw_datasets.size(), 0.0));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& cm = models[i];
    const bool pooled = cm.own >= raw_datasets.size();
    if (pooled && cm.train_brakings.size() != offset.back())
      throw Error("cross_evaluate: pooled model mask does not cover all datasets");
    for (std::size_t j = 0; j < raw_datasets.size(); ++j) {
      const auto& ds = raw_datasets[j];
      std::vector<std::uint8_t> select(ds.braking_ids.size(), 1);
      if (pooled) {
        for (std::size_t b = 0; b < select.size(); ++b) select[b] = !cm.train_brakings[offset[j] + b];
      } else if (cm.own == j) {
        if (cm.train_brakings.size() != select.size()) throw Error("cross_evaluate: training mask has the wrong length");
        for (std::size_t b = 0; b < select.size(); ++b) select[b] = !cm.train_brakings[b];
      }
      const auto ws = ds.windows_of(select);
      const auto normalized = normalize(ds.subset(ws), cm.model.stats);
      out[i][j] = evaluate(cm.model, normalized).mcc;
    }
  }
  return out;
}

}  // namespace squeal
