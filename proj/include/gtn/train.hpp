#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gtn/data.hpp"
#include "gtn/model.hpp"

namespace gtn {

/// Adagrad optimizer state: per-parameter sums of squared gradients plus the
/// current learning rate (which only ever decreases from base_lr).
struct OptimState {
  double lr = 1e-4;
  double base_lr = 1e-4;
  double eps = 1e-10;
  std::map<std::string, Array> acc;  // created lazily on the first step
};

/// One Adagrad update: for every parameter that received a gradient,
/// acc += g^2 and theta -= lr * g / (sqrt(acc) + eps), elementwise.
/// Parameters without a gradient this sweep are untouched.
/// Throws NumericError naming the parameter if a gradient is non-finite.
void adagrad_step(GTNParams& params, OptimState& state);

/// Reduce-on-plateau schedule constants.
struct PlateauConfig {
  double factor = 0.5;
  std::size_t patience = 10;
  double rel_threshold = 1e-4;
  double min_lr = 1e-6;
};

struct PlateauDecision {
  double lr;    // learning rate for the upcoming epoch
  bool stop;    // lr already at its floor and patience ran out again
};

/// Replays the training-loss history through the plateau rule: a loss counts
/// as an improvement when it beats the best seen by more than rel_threshold
/// (relative); `patience` consecutive non-improvements halve the rate (never
/// below min_lr, never above base_lr). Pure function of its inputs, so the
/// schedule is trivially reproducible.
PlateauDecision lr_plateau(const std::vector<double>& train_loss_history, double base_lr,
                           const PlateauConfig& cfg = {});

/// One row of the training log. Accuracy cells are NaN on epochs where
/// evaluation was skipped (see TrainConfig::eval_interval).
struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double lr = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 = no finite epoch completed
  double best_train_loss = 0.0;
  double test_accuracy_at_best = 0.0;  // headline metric
  double best_test_accuracy_seen = 0.0;  // transparency: best test acc over the run
  bool aborted = false;        // a non-finite loss or gradient ended the run early
  std::string abort_reason;    // empty unless aborted
};

/// Renders the log as "epoch,train_loss,train_acc,test_acc,lr" CSV with
/// shortest round-trip doubles; NaN cells are left empty.
std::string train_log_csv(const TrainLog& log);

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 16;
  double lr = 1e-4;
  std::size_t eval_interval = 1;  // evaluate train/test accuracy every k epochs
  std::uint64_t seed = 0;
  PlateauConfig plateau;
  std::string checkpoint_path;  // best checkpoint written here when non-empty
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true label][predicted]
  std::vector<int> predictions;                     // one per sample, in order
};

/// Runs the model over a split in eval mode. Argmax ties go to the lowest
/// class index. Throws DataError on an empty split.
EvalResult evaluate(const GTNParams& params, const ModelConfig& cfg,
                    const std::vector<MTSSample>& split);

struct TrainResult {
  TrainLog log;
  GTNParams best_params;  // parameters at the best-train-loss epoch
  ModelConfig config;
};

/// Full training loop: per epoch shuffle + batch, train-mode forward,
/// cross-entropy, backward, Adagrad step, plateau schedule; evaluation every
/// eval_interval epochs; checkpoint kept (and written, if a path is set)
/// whenever the train loss improves. The reported headline metric is the test
/// accuracy of the best-train-loss parameters, never the best test accuracy.
/// A non-finite loss stops the run with the last good checkpoint retained and
/// log.aborted set.
TrainResult train(const MTSDataset& data, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg);

}  // namespace gtn
