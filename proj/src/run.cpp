#include "gtn/run.hpp"

#include "gtn/data.hpp"
#include "gtn/errors.hpp"
#include "gtn/interpret.hpp"
#include "gtn/text.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>

using nlohmann::json;

namespace gtn {

namespace {

namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

/// The fully resolved run configuration as one flat JSON object. Keys are
/// sorted, every default is spelled out, and the output directory is omitted
/// (the file describes the run, not where it landed).
std::string run_config_json(const RunConfig& cfg, const std::string& dataset_name) {
  json j = json::parse(config_to_json_string(cfg.model));
  j["dataset"] = dataset_name;
  j["dataset_dir"] = cfg.dataset_dir;
  j["lr"] = cfg.training.lr;
  j["batch_size"] = cfg.training.batch_size;
  j["epochs"] = cfg.training.epochs;
  j["eval_interval"] = cfg.training.eval_interval;
  j["seed"] = cfg.training.seed;
  j["plateau_factor"] = cfg.training.plateau.factor;
  j["plateau_patience"] = cfg.training.plateau.patience;
  j["plateau_rel_threshold"] = cfg.training.plateau.rel_threshold;
  j["plateau_min_lr"] = cfg.training.plateau.min_lr;
  return j.dump(2) + "\n";
}

std::string report_json(const TrainLog& log, const std::string& dataset_name,
                        const ModelConfig& model, std::uint64_t seed) {
  json j;
  j["dataset"] = dataset_name;
  j["variant"] = variant_name(model.variant);
  j["seed"] = seed;
  j["epochs_run"] = log.epochs.size();
  j["epoch"] = log.best_epoch;
  j["best_train_loss"] = log.best_train_loss;
  j["test_accuracy"] = log.test_accuracy_at_best;
  j["best_test_accuracy_seen"] = log.best_test_accuracy_seen;
  j["aborted"] = log.aborted;
  j["abort_reason"] = log.abort_reason;
  return j.dump(2) + "\n";
}

/// Fills the dataset-dependent model fields (when left at 0) and verifies the
/// explicit ones fit the data.
ModelConfig resolve_model(const ModelConfig& requested, const MTSDataset& data) {
  ModelConfig m = requested;
  if (m.n_classes == 0) m.n_classes = data.n_classes;
  if (m.n_channels == 0) m.n_channels = data.n_channels;
  if (m.max_len == 0) m.max_len = data.max_len;
  if (m.n_channels != data.n_channels) {
    throw DataError("run: model expects " + std::to_string(m.n_channels) +
                    " channels but dataset '" + data.name + "' has " +
                    std::to_string(data.n_channels));
  }
  if (m.n_classes < data.n_classes) {
    throw DataError("run: model has " + std::to_string(m.n_classes) +
                    " classes but dataset '" + data.name + "' has " +
                    std::to_string(data.n_classes));
  }
  if (m.max_len < data.max_len) {
    throw DataError("run: model max_len " + std::to_string(m.max_len) +
                    " is shorter than the dataset's longest series (" +
                    std::to_string(data.max_len) + ")");
  }
  m.validate();
  return m;
}

}  // namespace

RunOutcome run_train(const RunConfig& cfg) {
  if (cfg.dataset_dir.empty()) throw std::invalid_argument("run_train: dataset_dir is empty");
  if (cfg.out_dir.empty()) throw std::invalid_argument("run_train: out_dir is empty");

  const MTSDataset data = load_dataset(cfg.dataset_dir);
  const ModelConfig model = resolve_model(cfg.model, data);

  fs::create_directories(cfg.out_dir);
  TrainConfig training = cfg.training;
  training.checkpoint_path = join(cfg.out_dir, "best.ckpt");

  RunConfig resolved = cfg;
  resolved.model = model;
  write_text_file(join(cfg.out_dir, "config.json"), run_config_json(resolved, data.name));

  RunOutcome out;
  out.dataset_name = data.name;
  out.result = train(data, model, training);
  // train() writes the checkpoint on every improvement; rewrite it here so it
  // also exists when a run aborted before the first finite epoch
  save_checkpoint(training.checkpoint_path, out.result.best_params, model, training.seed);

  write_text_file(join(cfg.out_dir, "log.csv"), train_log_csv(out.result.log));
  out.report_json = report_json(out.result.log, data.name, model, training.seed);
  write_text_file(join(cfg.out_dir, "report.json"), out.report_json);
  return out;
}

std::string run_ablate(const RunConfig& base) {
  if (base.out_dir.empty()) throw std::invalid_argument("run_ablate: out_dir is empty");
  fs::create_directories(base.out_dir);

  std::string header = "dataset";
  for (const Variant v : all_variants()) header += "," + variant_name(v);

  std::string dataset_name;
  std::string row;
  for (const Variant v : all_variants()) {
    RunConfig sub = base;
    sub.model.set_variant(v);
    sub.out_dir = join(base.out_dir, variant_name(v));
    std::string cell;
    try {
      const RunOutcome out = run_train(sub);
      dataset_name = out.dataset_name;
      cell = out.result.log.aborted ? "aborted"
                                    : fmt_double(out.result.log.test_accuracy_at_best);
    } catch (const std::exception&) {
      cell = "error";
    }
    row += "," + cell;
  }
  if (dataset_name.empty()) dataset_name = fs::path(base.dataset_dir).filename().string();

  const std::string csv = header + "\n" + dataset_name + row + "\n";
  write_text_file(join(base.out_dir, "ablation.csv"), csv);
  return csv;
}

std::vector<std::string> run_inspect(const std::string& checkpoint_path,
                                     const std::string& dataset_dir, std::size_t sample_id,
                                     const std::string& out_dir) {
  if (out_dir.empty()) throw std::invalid_argument("run_inspect: out_dir is empty");
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const MTSDataset data = load_dataset(dataset_dir);

  if (ckpt.config.n_channels != data.n_channels) {
    throw DataError("run_inspect: checkpoint was trained on " +
                    std::to_string(ckpt.config.n_channels) + " channels but dataset '" +
                    data.name + "' has " + std::to_string(data.n_channels));
  }
  if (ckpt.config.n_classes < data.n_classes) {
    throw DataError("run_inspect: checkpoint has " + std::to_string(ckpt.config.n_classes) +
                    " classes but dataset '" + data.name + "' has " +
                    std::to_string(data.n_classes));
  }
  if (ckpt.config.max_len < data.max_len) {
    throw DataError("run_inspect: checkpoint max_len " + std::to_string(ckpt.config.max_len) +
                    " is shorter than the dataset's longest series (" +
                    std::to_string(data.max_len) + ")");
  }

  const std::vector<MTSSample>& split = data.test;
  if (split.empty()) throw DataError("run_inspect: dataset '" + data.name + "' has no test split");
  if (sample_id >= split.size()) {
    throw std::invalid_argument("run_inspect: sample_id " + std::to_string(sample_id) +
                                " is out of range; the test split has " +
                                std::to_string(split.size()) + " samples (valid ids 0.." +
                                std::to_string(split.size() - 1) + ")");
  }

  fs::create_directories(out_dir);
  std::vector<std::string> written =
      export_attention(ckpt.params, ckpt.config, split[sample_id], out_dir, sample_id);

  if (ckpt.config.variant == Variant::Gated) {
    const GateStats stats = gate_stats(ckpt.params, ckpt.config, split);
    json j;
    j["mean"] = stats.mean;
    j["pairs"] = stats.pairs;
    const std::string path = join(out_dir, "gate_stats.json");
    write_text_file(path, j.dump(2) + "\n");
    written.push_back(path);
  }

  const std::vector<std::string> embed = export_embeddings(ckpt.params, ckpt.config, split, out_dir);
  written.insert(written.end(), embed.begin(), embed.end());
  return written;
}

}  // namespace gtn
