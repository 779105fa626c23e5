#pragma once

#include <array>
#include <string>
#include <vector>

#include "gtn/data.hpp"
#include "gtn/model.hpp"

namespace gtn {

/// Classic dynamic-time-warping distance between two univariate series:
/// local cost |a_i - b_j|, moves right/down/diagonal, no window constraint,
/// no path-length normalization. Throws on an empty series.
double dtw(const std::vector<double>& a, const std::vector<double>& b);

/// Symmetric pairwise-distance matrix with an exactly zero diagonal.
struct DistanceMatrix {
  std::string kind;  // "dtw-channel" or "euclid-step"
  RowMat values;
};

/// Pairwise DTW between the channels of one sample, computed over the first
/// true_len steps only (batch padding never contributes).
DistanceMatrix channel_dtw_matrix(const MTSSample& sample);

/// Entry (s, t) is the Euclidean distance between the C-dimensional
/// cross-sections at steps s and t, over the first true_len steps.
DistanceMatrix step_euclid_matrix(const MTSSample& sample);

/// Renders a matrix as bare CSV rows with shortest round-trip doubles.
std::string matrix_csv(const RowMat& m);

/// Runs one sample through the model in eval mode and writes, into out_dir:
///   - per-head and head-averaged attention maps for every encoder layer of
///     every active tower (attention_<tower>_l<layer>_head<h>.csv / _mean.csv),
///   - the channel DTW and step Euclidean distance matrices
///     (dtw_channel.csv, euclid_step.csv),
///   - manifest.json describing each file (tower, layer, head, kind) plus the
///     sample id, label, true_len, and variant.
/// Step-aligned matrices share row indices with the sample's steps and
/// channel-aligned matrices with its channels, so the maps and the distance
/// matrices can be compared panel by panel. Returns the files written
/// (manifest last). Deterministic: re-export is byte-identical.
std::vector<std::string> export_attention(const GTNParams& params, const ModelConfig& cfg,
                                          const MTSSample& sample, const std::string& out_dir,
                                          std::size_t sample_id);

/// Per-sample gate weights plus their mean. Pairs are (channel tower,
/// step tower) and each sums to exactly 1; the mean is kept on the same
/// simplex (second component defined as 1 - first).
struct GateStats {
  std::vector<std::array<double, 2>> pairs;
  std::array<double, 2> mean{0.0, 0.0};
};

/// Gate weights over a split, eval mode. Requires the gated variant and a
/// non-empty split.
GateStats gate_stats(const GTNParams& params, const ModelConfig& cfg,
                     const std::vector<MTSSample>& split);

/// Writes per-time-step embedding vectors (embeddings.csv: sample, step,
/// label, then d_model columns — one row per real step, so the row count is
/// the sum of true_len over the split) and per-sample classifier-input
/// feature vectors (features.csv: sample, label, then classifier_width()
/// columns; for the gated variant this is the post-gate fused vector).
/// embeddings.csv needs the step tower and is skipped for channel-only
/// variants. Returns the files written. Deterministic.
std::vector<std::string> export_embeddings(const GTNParams& params, const ModelConfig& cfg,
                                           const std::vector<MTSSample>& split,
                                           const std::string& out_dir);

}  // namespace gtn
