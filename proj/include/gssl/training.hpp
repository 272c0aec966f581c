// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gssl/config.hpp"
#include "gssl/datasets.hpp"
#include "gssl/losses.hpp"
#include "gssl/model.hpp"
#include "gssl/rng.hpp"

namespace gssl::train {

/// SGD with heavy-ball momentum and coupled L2 weight decay:
///   g += wd * p;  v = mu * v + g;  p -= lr * v
class Sgd {
 public:
  Sgd(double momentum = 0.9, double weight_decay = 2e-4) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<nn::Parameter*>& params, double lr);

  /// Momentum buffers keyed by parameter name.
  const std::map<std::string, Tensor>& state() const noexcept { return velocity_; }
  void load_state(std::map<std::string, Tensor> state) { velocity_ = std::move(state); }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, Tensor> velocity_;
};

struct Batch {
  Tensor images;                            // (B,3,H,W)
  std::vector<int> class_targets;           // original labels
  std::vector<std::vector<int>> ssl_targets;  // [task][i], task order as given
};

/// Applies one composed pretext transform per example. The per-example
/// streams are drawn from `rng` up front so the result does not depend on the
/// thread count.
Batch build_batch(std::span<const data::LabeledExample> examples, std::span<const transforms::TaskKind> tasks,
                  Rng& rng);

/// Untransformed images stacked into (B,3,H,W).
Tensor stack_images(std::span<const data::LabeledExample> examples);

/// In-place (x - mean_c) / std_c.
void normalize_images(Tensor& images, const data::ChannelStats& stats);

/// Index of the row maximum; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);
int count_correct(const Tensor& logits, std::span<const int> labels);

struct StepResult {
  loss::LossBreakdown loss;
  std::vector<double> gate_sum;  // per task, summed over the batch
  std::vector<int> ssl_correct;  // per task
  int class_correct = 0;
  int batch_size = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  bool drw_active = false;
  int steps = 0;
  double l_c = 0.0;
  double l_tot = 0.0;
  std::vector<double> gated_losses;
  std::vector<double> ssl_accuracy;  // on transformed training batches
  std::vector<double> mean_gate;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

nlohmann::json to_json(const EpochMetrics& m, const std::vector<transforms::TaskKind>& tasks);

using StepCallback = std::function<void(int epoch, int step, const StepResult&)>;

/// Owns the model, optimizer and loss constants for one training run.
class Trainer {
 public:
  /// `train` must already be the (possibly long-tailed) training set; class
  /// counts for the margins and weights are taken from it.
  Trainer(TrainConfig config, data::Dataset train, data::Dataset test);

  StepResult train_step(const Batch& batch, int epoch);
  EpochMetrics train_epoch(int epoch, const StepCallback& callback = {});

  /// Top-1 accuracy of the classifier on untransformed images.
  double evaluate(const data::Dataset& dataset);
  double evaluate_test() { return evaluate(test_); }
  /// Per-task pretext accuracy on transformed copies of `dataset`.
  std::vector<double> evaluate_ssl(const data::Dataset& dataset, std::uint64_t stream);

  /// Batch order of `epoch`, a seeded permutation of the training indices.
  std::vector<std::size_t> epoch_order(int epoch) const;
  Batch make_batch(std::span<const std::size_t> indices, int epoch, int batch_index) const;

  bool drw_active(int epoch) const noexcept { return config_.drw_epoch && epoch >= *config_.drw_epoch; }

  /// Model tensors, momentum buffers under "optim.momentum." and a manifest.
  void save_checkpoint(const std::filesystem::path& path, int epoch);
  /// Returns the epoch stored in the checkpoint. Throws ConfigError when the
  /// checkpoint was written for a different model layout.
  int load_checkpoint(const std::filesystem::path& path);

  nn::GatedModel& model() noexcept { return model_; }
  const TrainConfig& config() const noexcept { return config_; }
  const data::Dataset& train_set() const noexcept { return train_; }
  const data::Dataset& test_set() const noexcept { return test_; }
  const std::vector<int>& class_counts() const noexcept { return counts_; }
  const loss::ClassMargins& margins() const noexcept { return margins_; }
  const loss::ClassWeights& weights() const noexcept { return weights_; }

 private:
  Tensor prepare_images(Tensor images) const;

  TrainConfig config_;
  data::Dataset train_;
  data::Dataset test_;
  std::vector<int> counts_;
  loss::ClassMargins margins_;
  loss::ClassWeights weights_;
  nn::GatedModel model_;
  Sgd optimizer_;
};

/// Train and test splits with the long-tailed subsample applied.
struct TrainingData {
  data::Dataset train;
  data::Dataset test;
  std::vector<std::size_t> subsample;  // empty when balanced
};

/// Resolves the data root (config, then $DATA_ROOT), loads the dataset and
/// applies the imbalance profile or a stored subsample file.
TrainingData load_training_data(const TrainConfig& config);

struct RunOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  /// Simulates an interruption after this epoch (0-based, inclusive).
  std::optional<int> stop_after_epoch;
  StepCallback on_step;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct RunResult {
  int epochs_completed = 0;
  std::optional<double> final_test_accuracy;
  std::filesystem::path out_dir;
};

/// Trains with checkpoints, writing config.json, metrics.jsonl (one line per
/// epoch), checkpoints/epoch_<N>.ckpt and report.md under out_dir. With
/// `resume` the frozen config.json and latest checkpoint are used instead of
/// `config`, and metrics beyond that checkpoint are dropped.
RunResult run(TrainConfig config, const RunOptions& options);

/// Latest checkpoints/epoch_<N>.ckpt under `run_dir`, if any.
std::optional<std::pair<int, std::filesystem::path>> latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace gssl::train
