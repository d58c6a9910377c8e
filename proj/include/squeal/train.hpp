#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "squeal/eval.hpp"
#include "squeal/model.hpp"

namespace squeal {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  std::size_t batch = 256;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t patience = 0;  // stop after this many epochs without a better val MCC; 0 disables
  double clip_norm = 1.0;    // global gradient-norm limit; 0 disables

  /// "paper": batch 256; "desk": batch 64. Both 200 epochs.
  static TrainConfig preset(const std::string& name);
  void validate() const;
};

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);

class Adam {
 public:
  Adam(const TrainConfig& cfg, std::size_t n);
  void step(std::span<double> theta, std::span<const double> grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0, train_mcc = 0.0;
  double val_loss = 0.0, val_mcc = 0.0;  // NaN without a validation set
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on normalized windows. Train loss and MCC are accumulated
/// over the epoch's batches in training mode; validation runs with dropout off.
/// The returned model carries train.stats. Throws on a non-finite loss.
TrainResult train(const ModelConfig& cfg, const TrainConfig& tcfg, const WindowedDataset& train_set,
                  const WindowedDataset* val_set = nullptr, const EpochCallback& on_epoch = {});

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

struct EvalResult {
  double loss = 0.0;
  double mcc = 0.0;
  ConfusionCounts counts;     // per window (scalar) or per real position (sequence)
  std::vector<double> prob;   // [n x outputs]
};

/// Dropout-free scores of a normalized dataset; a probability >= 0.5 is a squeal.
EvalResult evaluate(const Model& model, const WindowedDataset& ds);
EvalResult evaluate(const Model& model, const WindowedDataset& ds, std::span<const std::size_t> windows);

struct BrakingPrediction {
  bool squeal = false;
  std::vector<double> propensity;    // per time step, window outputs averaged over overlaps
  std::vector<std::uint8_t> labels;  // propensity >= 0.5
  double onset = -1.0;               // s, negative without a predicted squeal
};

/// Windows the braking like the training data, plus an end-aligned window when
/// the trailing remnant would otherwise go unscored. Scalar models spread each
/// window's probability over its samples; the verdict is squeal when any
/// window (scalar) or time step (sequence) reaches 0.5.
BrakingPrediction predict_braking(const Model& model, const LoadSequence& seq);

/// Per squealing braking: |predicted onset - labelled onset|, infinity when no
/// squeal is predicted.
std::vector<double> onset_errors(const Model& model, std::span<const LoadSequence> brakings);

/// Per-time-step confusion counts of stitched predictions against the labels.
ConfusionCounts timestep_counts(const Model& model, std::span<const LoadSequence> brakings);

/// Stratified braking-level split, stats from the training windows, training.
struct SplitRun {
  TrainResult result;
  std::vector<std::uint8_t> train_brakings;
  EvalResult validation;
};

SplitRun train_on_split(const ModelConfig& cfg, const TrainConfig& tcfg, const WindowedDataset& raw,
                        double train_fraction, std::uint64_t split_seed, const EpochCallback& on_epoch = {});

struct CrossModel {
  std::string name;
  Model model;
  std::size_t own = 0;                        // index of the dataset it was trained on
  std::vector<std::uint8_t> train_brakings;   // per braking of its own dataset
};

/// mcc[i][j]: model i on dataset j, inputs normalized with model i's training
/// statistics. On its own dataset a model is scored on its held-out brakings
/// only; other datasets are scored in full. A model with own >= datasets.size()
/// (a pooled model) is scored on every dataset's brakings outside train_brakings
/// when that mask covers the concatenation of all datasets.
std::vector<std::vector<double>> cross_evaluate(std::span<const CrossModel> models,
                                                std::span<const WindowedDataset> raw_datasets);

}  // namespace squeal
