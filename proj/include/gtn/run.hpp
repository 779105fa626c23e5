#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gtn/model.hpp"
#include "gtn/train.hpp"

namespace gtn {

/// Everything one training run needs: the dataset location, the model, the
/// training-loop constants, and the artifact directory. The run writes the
/// fully resolved configuration back into the output directory, so config +
/// seed reproduce the run exactly.
struct RunConfig {
  std::string dataset_dir;  // directory in the layout of docs/dataset_format.md
  std::string out_dir;
  ModelConfig model;        // n_classes / n_channels / max_len are taken from
                            // the dataset when left at 0
  TrainConfig training;
};

struct RunOutcome {
  TrainResult result;
  std::string dataset_name;
  std::string report_json;  // contents of the report.json that was written
};

/// Loads the dataset, completes and validates the model config against it,
/// trains, and writes four artifacts into out_dir:
///   config.json  - flat JSON, every field spelled out (model + training +
///                  dataset name/location), independent of out_dir
///   log.csv      - one row per epoch
///   best.ckpt    - parameters at the best-train-loss epoch
///   report.json  - dataset, variant, seed, epochs_run, epoch (best),
///                  best_train_loss, test_accuracy (headline, at best),
///                  best_test_accuracy_seen, aborted, abort_reason
/// No artifact embeds the output path or a timestamp, so reruns with the same
/// config and seed reproduce every file byte for byte.
RunOutcome run_train(const RunConfig& cfg);

/// Trains all six ablation variants with the same data, seed, and training
/// constants, each into out_dir/<variant>/ via run_train (so every cell's
/// artifacts are byte-identical to a standalone run with that variant).
/// Writes out_dir/ablation.csv, one table row per dataset:
///   dataset,step,step+mask,channel,channel+mask,concat,gated
/// A variant that throws is recorded as "error" (an aborted run as
/// "aborted") and the sweep continues. Returns the CSV text.
std::string run_ablate(const RunConfig& base);

/// Loads a checkpoint and a dataset, checks they fit together, and writes the
/// interpretability artifacts for the test split into out_dir: attention maps
/// and distance matrices for the chosen sample (export_attention), gate
/// weights over the whole split (gate_stats.json; gated checkpoints only),
/// and per-step embeddings plus classifier-input features (export_embeddings).
/// Throws std::invalid_argument naming the valid id range when sample_id is
/// out of range. Returns the files written.
std::vector<std::string> run_inspect(const std::string& checkpoint_path,
                                     const std::string& dataset_dir, std::size_t sample_id,
                                     const std::string& out_dir);

}  // namespace gtn
