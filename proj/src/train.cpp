#include "gtn/train.hpp"

#include "gtn/errors.hpp"
#include "gtn/ops.hpp"
#include "gtn/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gtn {

void adagrad_step(GTNParams& params, OptimState& state) {
  params.visit([&state](const std::string& name, Tensor& t) {
    if (!t.requires_grad() || !t.has_grad()) return;
    const Array& g = t.grad();
    if (!g.isFinite().all()) {
      throw NumericError("adagrad_step: non-finite gradient for parameter '" + name + "'");
    }
    Array& acc = state.acc.try_emplace(name, Array::Zero(g.size())).first->second;
    if (acc.size() != g.size()) {
      throw std::invalid_argument("adagrad_step: accumulator size mismatch for '" + name + "'");
    }
    acc += g.square();
    t.leaf_values() -= state.lr * g / (acc.sqrt() + state.eps);
  });
}

PlateauDecision lr_plateau(const std::vector<double>& train_loss_history, double base_lr,
                           const PlateauConfig& cfg) {
  if (cfg.factor <= 0.0 || cfg.factor >= 1.0) {
    throw std::invalid_argument("lr_plateau: factor must lie in (0, 1)");
  }
  if (cfg.patience == 0) throw std::invalid_argument("lr_plateau: patience must be >= 1");
  if (cfg.rel_threshold < 0.0 || cfg.min_lr < 0.0 || base_lr < 0.0) {
    throw std::invalid_argument("lr_plateau: rates and thresholds must be non-negative");
  }
  const double floor = std::min(cfg.min_lr, base_lr);  // lr never exceeds base_lr
  double lr = base_lr;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  bool stop = false;
  for (const double loss : train_loss_history) {
    if (loss < best * (1.0 - cfg.rel_threshold)) {
      best = loss;
      bad = 0;
    } else {
      ++bad;
    }
    if (bad >= cfg.patience) {
      if (lr <= floor) stop = true;  // nothing left to reduce
      lr = std::max(lr * cfg.factor, floor);
      bad = 0;
    }
  }
  return {lr, stop};
}

std::string train_log_csv(const TrainLog& log) {
  std::string out = "epoch,train_loss,train_acc,test_acc,lr\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  for (const EpochStats& row : log.epochs) {
    out += std::to_string(row.epoch);
    out += ',';
    out += cell(row.train_loss);
    out += ',';
    out += cell(row.train_acc);
    out += ',';
    out += cell(row.test_acc);
    out += ',';
    out += cell(row.lr);
    out += '\n';
  }
  return out;
}

EvalResult evaluate(const GTNParams& params, const ModelConfig& cfg,
                    const std::vector<MTSSample>& split) {
  if (split.empty()) throw DataError("evaluate: empty split");
  EvalResult res;
  res.confusion.assign(cfg.n_classes, std::vector<std::size_t>(cfg.n_classes, 0));
  std::size_t correct = 0;
  for (const MTSSample& sample : split) {
    if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= cfg.n_classes) {
      throw DataError("evaluate: label " + std::to_string(sample.label) +
                      " outside the configured " + std::to_string(cfg.n_classes) + " classes");
    }
    const Tensor logits = forward(sample, params, cfg, Mode::Eval).logits;
    std::size_t pred = 0;
    for (std::size_t j = 1; j < cfg.n_classes; ++j) {
      if (logits[j] > logits[pred]) pred = j;  // ties keep the lowest index
    }
    res.predictions.push_back(static_cast<int>(pred));
    res.confusion[static_cast<std::size_t>(sample.label)][pred] += 1;
    if (static_cast<std::size_t>(sample.label) == pred) ++correct;
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  return res;
}

TrainResult train(const MTSDataset& data, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg) {
  model_cfg.validate();
  if (train_cfg.epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
  if (train_cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (train_cfg.eval_interval == 0) {
    throw std::invalid_argument("train: eval_interval must be >= 1");
  }
  if (train_cfg.lr < 0.0) throw std::invalid_argument("train: learning rate must be >= 0");
  if (data.train.empty()) throw DataError("train: dataset has no training samples");
  if (data.n_channels != model_cfg.n_channels || data.n_classes != model_cfg.n_classes ||
      data.max_len > model_cfg.max_len) {
    throw DataError("train: dataset (" + std::to_string(data.n_channels) + " channels, " +
                    std::to_string(data.n_classes) + " classes, max_len " +
                    std::to_string(data.max_len) + ") does not fit the model config");
  }

  const Rng base(train_cfg.seed);
  GTNParams params = GTNParams::init(model_cfg, base);
  Rng shuffle_rng = base.derive("shuffle");
  Rng dropout_rng = base.derive("dropout");

  OptimState opt;
  opt.lr = train_cfg.lr;
  opt.base_lr = train_cfg.lr;

  TrainResult result;
  result.config = model_cfg;
  result.best_params = params.clone();  // last-good fallback if epoch 1 aborts
  TrainLog& log = result.log;
  log.best_train_loss = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  log.test_accuracy_at_best = nan;
  log.best_test_accuracy_seen = nan;

  std::vector<double> loss_history;
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    const PlateauDecision decision =
        lr_plateau(loss_history, train_cfg.lr, train_cfg.plateau);
    if (decision.stop) break;
    opt.lr = decision.lr;

    double loss_sum = 0.0;
    std::size_t seen = 0;
    const std::vector<Batch> batches =
        batchify(data.train, train_cfg.batch_size, shuffle_rng, /*shuffle=*/true);
    for (const Batch& batch : batches) {
      std::vector<Tensor> per_sample;
      std::vector<int> labels;
      per_sample.reserve(batch.samples.size());
      for (const MTSSample& sample : batch.samples) {
        per_sample.push_back(
            forward(sample, params, model_cfg, Mode::Train, &dropout_rng).logits);
        labels.push_back(sample.label);
      }
      const Tensor loss = cross_entropy(concat(per_sample, 0), labels);
      const double value = loss.scalar_value();
      if (!std::isfinite(value)) {
        log.aborted = true;
        log.abort_reason = "non-finite training loss at epoch " + std::to_string(epoch);
        break;
      }
      params.visit([](const std::string&, Tensor& t) { t.zero_grad(); });
      backward(loss);
      try {
        adagrad_step(params, opt);
      } catch (const NumericError& e) {
        log.aborted = true;
        log.abort_reason = e.what();
        break;
      }
      loss_sum += value * static_cast<double>(batch.samples.size());
      seen += batch.samples.size();
    }
    if (log.aborted) break;

    const double epoch_loss = loss_sum / static_cast<double>(seen);
    loss_history.push_back(epoch_loss);

    EpochStats row;
    row.epoch = epoch;
    row.train_loss = epoch_loss;
    row.train_acc = nan;
    row.test_acc = nan;
    row.lr = opt.lr;
    if (epoch % train_cfg.eval_interval == 0) {
      row.train_acc = evaluate(params, model_cfg, data.train).accuracy;
      if (!data.test.empty()) {
        row.test_acc = evaluate(params, model_cfg, data.test).accuracy;
        if (std::isnan(log.best_test_accuracy_seen) ||
            row.test_acc > log.best_test_accuracy_seen) {
          log.best_test_accuracy_seen = row.test_acc;
        }
      }
    }
    log.epochs.push_back(row);

    if (epoch_loss < log.best_train_loss) {
      log.best_train_loss = epoch_loss;
      log.best_epoch = epoch;
      result.best_params = params.clone();
      if (!train_cfg.checkpoint_path.empty()) {
        save_checkpoint(train_cfg.checkpoint_path, params, model_cfg, train_cfg.seed);
      }
    }
  }

  if (!data.test.empty()) {
    log.test_accuracy_at_best = evaluate(result.best_params, model_cfg, data.test).accuracy;
  }
  return result;
}

}  // namespace gtn
