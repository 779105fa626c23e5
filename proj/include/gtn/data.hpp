#pragma once

#include "gtn/rng.hpp"
#include "gtn/tensor.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace gtn {

/// One multivariate series: `values` is time-major (row = step, column =
/// channel). Rows at index >= true_len, when present, are zero padding added
/// by batching; they carry no signal.
struct MTSSample {
  RowMat values;
  std::size_t true_len = 0;
  int label = 0;
};

/// A named dataset with its fixed train/test split. Loaders never resplit or
/// transform values.
struct MTSDataset {
  std::string name;
  std::size_t n_channels = 0;
  std::size_t n_classes = 0;
  std::size_t max_len = 0;
  std::vector<MTSSample> train;
  std::vector<MTSSample> test;
  std::vector<std::string> class_names;  // optional; empty when unnamed
};

/// Reads the directory layout described in docs/dataset_format.md:
/// meta.json + per-split labels.csv + one numeric CSV per sample (rows =
/// steps, columns = channels). Values are loaded verbatim — no scaling or
/// centering. Throws DataError on a missing manifest, channel-count mismatch,
/// non-finite value, or out-of-range label.
MTSDataset load_dataset(const std::string& dir);

/// Writes the same layout; only the first true_len rows of each sample are
/// stored. Numbers round-trip bit-exactly through fmt_double/parse_double.
void save_dataset(const MTSDataset& ds, const std::string& dir);

/// A training batch: every sample zero-padded to the longest true_len in the
/// batch (padded_len); original lengths retained for padding masks.
struct Batch {
  std::vector<MTSSample> samples;
  std::size_t padded_len = 0;
};

/// Splits samples into batches of at most batch_size, optionally shuffling
/// order first (deterministic under the rng's seed). Padding never alters a
/// real value.
std::vector<Batch> batchify(const std::vector<MTSSample>& samples, std::size_t batch_size,
                            Rng& rng, bool shuffle);

/// Recipe for the synthetic fixture: class k gets a class-specific frequency,
/// phase, and per-channel offset pattern, plus Gaussian noise. Classes are
/// linearly separable at low noise.
struct SynthSpec {
  std::size_t n_classes = 2;
  std::size_t n_channels = 4;
  std::size_t len_min = 20;
  std::size_t len_max = 30;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  double noise = 0.1;
};

MTSDataset synth_dataset(const SynthSpec& spec, Rng& rng);

}  // namespace gtn
