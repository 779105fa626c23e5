// Command-line front end: train one model, sweep the six ablation variants,
// export interpretability artifacts from a checkpoint, or generate the
// synthetic benchmark dataset.
//
// Exit codes: 0 success, 1 usage or validation error, 2 data error,
// 3 numeric failure (including a training run that aborted on a non-finite
// loss or gradient).
#include <CLI11.hpp>

#include "gtn/data.hpp"
#include "gtn/errors.hpp"
#include "gtn/run.hpp"

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace {

std::vector<std::string> variant_names() {
  std::vector<std::string> names;
  for (const gtn::Variant v : gtn::all_variants()) names.push_back(gtn::variant_name(v));
  return names;
}

gtn::Variant parse_variant(const std::string& name) {
  for (const gtn::Variant v : gtn::all_variants()) {
    if (gtn::variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + name + "'");
}

struct TrainFlags {
  std::string dataset;
  std::string out;
  std::string variant = "gated";
  std::string pool = "flatten";
  std::uint64_t seed = 0;
  std::size_t epochs = 500;
  std::size_t batch = 16;
  std::size_t eval_interval = 1;
  double lr = 0.0001;
  double dropout = 0.2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t d_tower = 128;
};

void add_train_flags(CLI::App& cmd, TrainFlags& f, bool with_variant) {
  cmd.add_option("--dataset", f.dataset, "Dataset directory (see docs/dataset_format.md)")
      ->required();
  cmd.add_option("--out", f.out, "Output directory for run artifacts")->required();
  if (with_variant) {
    cmd.add_option("--variant", f.variant, "Model variant")
        ->check(CLI::IsMember(variant_names()))
        ->capture_default_str();
  }
  cmd.add_option("--seed", f.seed, "Seed for init, shuffling, and dropout")
      ->capture_default_str();
  cmd.add_option("--epochs", f.epochs, "Maximum training epochs")->capture_default_str();
  cmd.add_option("--batch", f.batch, "Batch size")->capture_default_str();
  cmd.add_option("--eval-interval", f.eval_interval, "Evaluate accuracy every k epochs")
      ->capture_default_str();
  cmd.add_option("--lr", f.lr, "Adagrad learning rate")->capture_default_str();
  cmd.add_option("--dropout", f.dropout, "Dropout probability")->capture_default_str();
  cmd.add_option("--d-model", f.d_model, "Token embedding width")->capture_default_str();
  cmd.add_option("--n-heads", f.n_heads, "Attention heads per layer")->capture_default_str();
  cmd.add_option("--n-layers", f.n_layers, "Encoder layers per tower")->capture_default_str();
  cmd.add_option("--d-ff", f.d_ff, "Feed-forward hidden width")->capture_default_str();
  cmd.add_option("--d-tower", f.d_tower, "Per-tower feature width")->capture_default_str();
  cmd.add_option("--pool", f.pool, "Tower output reduction before the feature projection")
      ->check(CLI::IsMember({"flatten", "mean"}))
      ->capture_default_str();
}

gtn::RunConfig to_run_config(const TrainFlags& f) {
  gtn::RunConfig cfg;
  cfg.dataset_dir = f.dataset;
  cfg.out_dir = f.out;
  cfg.model.d_model = f.d_model;
  cfg.model.n_heads = f.n_heads;
  cfg.model.n_layers = f.n_layers;
  cfg.model.d_ff = f.d_ff;
  cfg.model.d_tower = f.d_tower;
  cfg.model.dropout_p = f.dropout;
  cfg.model.feature_pool = f.pool == "mean" ? gtn::FeaturePool::Mean : gtn::FeaturePool::Flatten;
  cfg.model.set_variant(parse_variant(f.variant));
  cfg.training.epochs = f.epochs;
  cfg.training.batch_size = f.batch;
  cfg.training.lr = f.lr;
  cfg.training.eval_interval = f.eval_interval;
  cfg.training.seed = f.seed;
  return cfg;
}

int do_train(const TrainFlags& f) {
  const gtn::RunOutcome outcome = gtn::run_train(to_run_config(f));
  const gtn::TrainLog& log = outcome.result.log;
  if (log.aborted) {
    std::cerr << "training aborted: " << log.abort_reason << "\n"
              << "artifacts (with the last good parameters) are in " << f.out << "\n";
    return 3;
  }
  std::cout << "dataset " << outcome.dataset_name << ", variant " << f.variant << ", seed "
            << f.seed << "\n"
            << "best train loss " << log.best_train_loss << " at epoch " << log.best_epoch
            << ", test accuracy " << log.test_accuracy_at_best << "\n"
            << "artifacts written to " << f.out << "\n";
  return 0;
}

int do_ablate(const TrainFlags& f) {
  std::cout << gtn::run_ablate(to_run_config(f));
  std::cerr << "per-variant artifacts written under " << f.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated two-tower transformer for multivariate time-series classification"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  CLI::App* cmd_train = app.add_subcommand("train", "Train one model and write run artifacts");
  add_train_flags(*cmd_train, train_flags, true);

  TrainFlags ablate_flags;
  CLI::App* cmd_ablate =
      app.add_subcommand("ablate", "Train all six variants with one seed and tabulate them");
  add_train_flags(*cmd_ablate, ablate_flags, false);

  std::string in_checkpoint, in_dataset, in_out;
  std::size_t sample_id = 0;
  CLI::App* cmd_inspect = app.add_subcommand(
      "inspect", "Export attention maps, distance matrices, gate stats, and embeddings");
  cmd_inspect->add_option("--checkpoint", in_checkpoint, "Checkpoint file (best.ckpt)")
      ->required();
  cmd_inspect->add_option("--dataset", in_dataset, "Dataset directory the model was trained on")
      ->required();
  cmd_inspect->add_option("--sample", sample_id, "Test-split sample id for the attention maps")
      ->capture_default_str();
  cmd_inspect->add_option("--out", in_out, "Output directory")->required();

  gtn::SynthSpec spec;
  std::string synth_out, synth_name = "synth";
  std::uint64_t synth_seed = 0;
  CLI::App* cmd_synth =
      app.add_subcommand("synth", "Generate the synthetic benchmark dataset on disk");
  cmd_synth->add_option("--out", synth_out, "Directory to create")->required();
  cmd_synth->add_option("--name", synth_name, "Dataset name")->capture_default_str();
  cmd_synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  cmd_synth->add_option("--classes", spec.n_classes, "Number of classes")->capture_default_str();
  cmd_synth->add_option("--channels", spec.n_channels, "Number of channels")
      ->capture_default_str();
  cmd_synth->add_option("--len-min", spec.len_min, "Shortest series length")
      ->capture_default_str();
  cmd_synth->add_option("--len-max", spec.len_max, "Longest series length")
      ->capture_default_str();
  cmd_synth->add_option("--train-per-class", spec.train_per_class, "Training samples per class")
      ->capture_default_str();
  cmd_synth->add_option("--test-per-class", spec.test_per_class, "Test samples per class")
      ->capture_default_str();
  cmd_synth->add_option("--noise", spec.noise, "Gaussian noise level")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(cmd_train)) return do_train(train_flags);
    if (app.got_subcommand(cmd_ablate)) return do_ablate(ablate_flags);
    if (app.got_subcommand(cmd_inspect)) {
      const std::vector<std::string> written =
          gtn::run_inspect(in_checkpoint, in_dataset, sample_id, in_out);
      for (const std::string& p : written) std::cout << p << "\n";
      return 0;
    }
    if (app.got_subcommand(cmd_synth)) {
      gtn::Rng rng(synth_seed);
      gtn::MTSDataset ds = gtn::synth_dataset(spec, rng);
      ds.name = synth_name;
      gtn::save_dataset(ds, synth_out);
      std::cout << "wrote dataset '" << ds.name << "' (" << ds.train.size() << " train / "
                << ds.test.size() << " test) to " << synth_out << "\n";
      return 0;
    }
  } catch (const gtn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const gtn::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
