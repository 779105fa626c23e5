#include "gtn/interpret.hpp"

#include "gtn/errors.hpp"
#include "gtn/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

using nlohmann::json;

namespace gtn {

double dtw(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("dtw: empty series");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  // rolling rows over the (n+1) x (m+1) table; D(0,0) = 0, edges infinite
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = std::fabs(a[i - 1] - b[j - 1]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

void check_sample(const MTSSample& sample, const char* where) {
  const std::size_t rows = static_cast<std::size_t>(sample.values.rows());
  if (sample.values.size() == 0) throw std::invalid_argument(std::string(where) + ": empty sample");
  if (sample.true_len == 0 || sample.true_len > rows) {
    throw std::invalid_argument(std::string(where) + ": true_len " +
                                std::to_string(sample.true_len) + " out of range for " +
                                std::to_string(rows) + " rows");
  }
}

}  // namespace

DistanceMatrix channel_dtw_matrix(const MTSSample& sample) {
  check_sample(sample, "channel_dtw_matrix");
  const std::size_t channels = static_cast<std::size_t>(sample.values.cols());
  const std::size_t len = sample.true_len;

  std::vector<std::vector<double>> series(channels, std::vector<double>(len));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < len; ++t) {
      series[c][t] = sample.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
    }
  }

  DistanceMatrix out;
  out.kind = "dtw-channel";
  out.values = RowMat::Zero(static_cast<Eigen::Index>(channels),
                            static_cast<Eigen::Index>(channels));
  for (std::size_t i = 0; i < channels; ++i) {
    for (std::size_t j = i + 1; j < channels; ++j) {
      const double d = dtw(series[i], series[j]);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
      out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
    }
  }
  return out;
}

DistanceMatrix step_euclid_matrix(const MTSSample& sample) {
  check_sample(sample, "step_euclid_matrix");
  const std::size_t len = sample.true_len;
  const std::size_t channels = static_cast<std::size_t>(sample.values.cols());

  DistanceMatrix out;
  out.kind = "euclid-step";
  out.values = RowMat::Zero(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(len));
  for (std::size_t s = 0; s < len; ++s) {
    for (std::size_t t = s + 1; t < len; ++t) {
      double sq = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = sample.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) -
                         sample.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
        sq += d * d;
      }
      const double dist = std::sqrt(sq);
      out.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = dist;
      out.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = dist;
    }
  }
  return out;
}

std::string matrix_csv(const RowMat& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ',';
      out += fmt_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

namespace {

RowMat head_average(const std::vector<RowMat>& heads) {
  RowMat mean = RowMat::Zero(heads.front().rows(), heads.front().cols());
  for (const RowMat& h : heads) mean += h;
  return mean / static_cast<double>(heads.size());
}

}  // namespace

std::vector<std::string> export_attention(const GTNParams& params, const ModelConfig& cfg,
                                          const MTSSample& sample, const std::string& out_dir,
                                          std::size_t sample_id) {
  std::filesystem::create_directories(out_dir);
  const ForwardResult fwd = forward(sample, params, cfg, Mode::Eval);

  std::vector<std::string> written;
  json manifest;
  manifest["sample_id"] = sample_id;
  manifest["label"] = sample.label;
  manifest["true_len"] = sample.true_len;
  manifest["variant"] = variant_name(cfg.variant);
  manifest["n_layers"] = cfg.n_layers;
  manifest["n_heads"] = cfg.n_heads;
  json files = json::array();

  auto emit = [&](const std::string& name, const std::string& content, const json& meta) {
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    write_text_file(path, content);
    written.push_back(path);
    json entry = meta;
    entry["file"] = name;
    files.push_back(entry);
  };

  auto emit_tower = [&](const std::string& tower,
                        const std::vector<std::vector<RowMat>>& layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t h = 0; h < layers[l].size(); ++h) {
        emit("attention_" + tower + "_l" + std::to_string(l) + "_head" + std::to_string(h) +
                 ".csv",
             matrix_csv(layers[l][h]),
             json{{"kind", "attention"}, {"tower", tower}, {"layer", l}, {"head", h}});
      }
      emit("attention_" + tower + "_l" + std::to_string(l) + "_mean.csv",
           matrix_csv(head_average(layers[l])),
           json{{"kind", "attention"}, {"tower", tower}, {"layer", l}, {"head", "mean"}});
    }
  };
  emit_tower("step", fwd.record.step_attention);
  emit_tower("channel", fwd.record.channel_attention);

  emit("dtw_channel.csv", matrix_csv(channel_dtw_matrix(sample).values),
       json{{"kind", "dtw-channel"}});
  emit("euclid_step.csv", matrix_csv(step_euclid_matrix(sample).values),
       json{{"kind", "euclid-step"}});

  manifest["files"] = files;
  const std::string manifest_path =
      (std::filesystem::path(out_dir) / "manifest.json").string();
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  written.push_back(manifest_path);
  return written;
}

GateStats gate_stats(const GTNParams& params, const ModelConfig& cfg,
                     const std::vector<MTSSample>& split) {
  if (cfg.variant != Variant::Gated) {
    throw std::invalid_argument("gate_stats: the " + variant_name(cfg.variant) +
                                " variant has no gate");
  }
  if (split.empty()) throw DataError("gate_stats: empty split");

  GateStats stats;
  double sum_first = 0.0;
  for (const MTSSample& sample : split) {
    const ForwardResult fwd = forward(sample, params, cfg, Mode::Eval);
    stats.pairs.push_back(fwd.record.gate_weights);
    sum_first += fwd.record.gate_weights[0];
  }
  stats.mean[0] = sum_first / static_cast<double>(split.size());
  stats.mean[1] = 1.0 - stats.mean[0];  // stays on the simplex exactly
  return stats;
}

std::vector<std::string> export_embeddings(const GTNParams& params, const ModelConfig& cfg,
                                           const std::vector<MTSSample>& split,
                                           const std::string& out_dir) {
  if (split.empty()) throw DataError("export_embeddings: empty split");
  std::filesystem::create_directories(out_dir);

  std::string embed_csv = "sample,step,label";
  for (std::size_t j = 0; j < cfg.d_model; ++j) embed_csv += ",e" + std::to_string(j);
  embed_csv += '\n';

  const std::size_t width = cfg.classifier_width();
  std::string feat_csv = "sample,label";
  for (std::size_t j = 0; j < width; ++j) feat_csv += ",f" + std::to_string(j);
  feat_csv += '\n';

  for (std::size_t i = 0; i < split.size(); ++i) {
    const MTSSample& sample = split[i];
    const ForwardResult fwd = forward(sample, params, cfg, Mode::Eval);
    const AttentionRecord& rec = fwd.record;

    if (cfg.uses_step_tower()) {
      for (std::size_t t = 0; t < sample.true_len; ++t) {
        embed_csv += std::to_string(i);
        embed_csv += ',';
        embed_csv += std::to_string(t);
        embed_csv += ',';
        embed_csv += std::to_string(sample.label);
        for (std::size_t j = 0; j < cfg.d_model; ++j) {
          embed_csv += ',';
          embed_csv += fmt_double(rec.embedding_outputs(static_cast<Eigen::Index>(t),
                                                        static_cast<Eigen::Index>(j)));
        }
        embed_csv += '\n';
      }
    }

    // classifier-input vector, rebuilt from the recorded tower features
    std::vector<double> z;
    z.reserve(width);
    switch (cfg.variant) {
      case Variant::Step:
      case Variant::StepMask: z = rec.step_feature; break;
      case Variant::Channel:
      case Variant::ChannelMask: z = rec.channel_feature; break;
      case Variant::Concat:
        z = rec.channel_feature;
        z.insert(z.end(), rec.step_feature.begin(), rec.step_feature.end());
        break;
      case Variant::Gated:
        for (const double v : rec.channel_feature) z.push_back(rec.gate_weights[0] * v);
        for (const double v : rec.step_feature) z.push_back(rec.gate_weights[1] * v);
        break;
    }
    if (z.size() != width) {
      throw std::logic_error("export_embeddings: feature width mismatch");
    }
    feat_csv += std::to_string(i);
    feat_csv += ',';
    feat_csv += std::to_string(sample.label);
    for (const double v : z) {
      feat_csv += ',';
      feat_csv += fmt_double(v);
    }
    feat_csv += '\n';
  }

  std::vector<std::string> written;
  if (cfg.uses_step_tower()) {
    const std::string path = (std::filesystem::path(out_dir) / "embeddings.csv").string();
    write_text_file(path, embed_csv);
    written.push_back(path);
  }
  const std::string feat_path = (std::filesystem::path(out_dir) / "features.csv").string();
  write_text_file(feat_path, feat_csv);
  written.push_back(feat_path);
  return written;
}

}  // namespace gtn
