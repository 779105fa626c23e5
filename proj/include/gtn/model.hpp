#pragma once

#include "gtn/data.hpp"
#include "gtn/mask.hpp"
#include "gtn/ops.hpp"
#include "gtn/rng.hpp"
#include "gtn/tensor.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gtn {

/// The six ablation variants: each tower alone (with or without its masks),
/// both towers concatenated, and both towers fused by the learned gate.
enum class Variant { Step, StepMask, Channel, ChannelMask, Concat, Gated };

const std::array<Variant, 6>& all_variants();
std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

/// How a tower's [n x d_model] encoder output is reduced before its feature
/// projection: row-major flatten (default) or a mean over real rows.
enum class FeaturePool { Flatten, Mean };

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 256;
  std::size_t d_tower = 128;
  double dropout_p = 0.2;
  double ln_eps = 1e-5;
  FeaturePool feature_pool = FeaturePool::Flatten;

  Variant variant = Variant::Gated;
  // Mask switches. set_variant() sets the conventional defaults (the "+mask"
  // variants and both two-tower variants enable them); they stay overridable.
  bool use_causal_mask_step = true;
  bool use_causal_mask_channel = true;
  bool use_padding_mask = true;

  // Dataset-dependent: every parameter shape is derivable from this struct.
  std::size_t n_classes = 0;
  std::size_t n_channels = 0;
  std::size_t max_len = 0;

  bool uses_step_tower() const;
  bool uses_channel_tower() const;
  /// Width of the classifier input: d_tower for single towers, 2*d_tower for
  /// concat and gated.
  std::size_t classifier_width() const;
  /// Width of the flattened tower output fed to the feature projection.
  std::size_t feature_input_width(bool step_tower) const;

  /// Sets `variant` and the mask flags that variant implies.
  void set_variant(Variant v);

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

std::string config_to_json_string(const ModelConfig& cfg);
ModelConfig config_from_json_string(const std::string& text);

/// One encoder layer's parameters. Attention projections carry no biases.
struct LayerParams {
  Tensor wq, wk, wv, wo;      // [d_model x d_model]
  Tensor ln1_g, ln1_b;        // [d_model]
  Tensor ff_w1, ff_b1;        // [d_model x d_ff], [d_ff]
  Tensor ff_w2, ff_b2;        // [d_ff x d_model], [d_model]
  Tensor ln2_g, ln2_b;        // [d_model]
};

struct TowerParams {
  Tensor embed_w, embed_b;    // [in x d_model], [d_model]
  std::vector<LayerParams> layers;
  Tensor feature_w, feature_b;  // [feature_input_width x d_tower], [d_tower]
};

/// All learnable parameters. Construction order, names and shapes are fixed
/// by ModelConfig alone, so checkpoints are exchangeable between runs.
struct GTNParams {
  std::optional<TowerParams> step;
  std::optional<TowerParams> channel;
  Tensor gate_w, gate_b;  // [2*d_tower x 2], [2]; gated variant only
  Tensor head_w, head_b;  // [classifier_width x n_classes], [n_classes]

  /// Glorot-uniform weights, zero biases, unit layer-norm gains. Each
  /// parameter draws from its own stream derived from "init/<name>", so
  /// shared sub-networks initialize identically across variants.
  static GTNParams init(const ModelConfig& cfg, const Rng& base);

  /// Calls fn(name, tensor) over every parameter in a fixed declared order.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  GTNParams clone() const;  // deep copy, fresh leaves
};

/// Everything observable about one forward pass besides the logits. Filled in
/// eval mode only; train mode leaves it empty.
struct AttentionRecord {
  std::vector<std::vector<RowMat>> step_attention;     // [layer][head], T x T
  std::vector<std::vector<RowMat>> channel_attention;  // [layer][head], C x C
  bool has_gate = false;
  std::array<double, 2> gate_weights{0.0, 0.0};  // (g1: channel, g2: step)
  std::vector<double> channel_feature;           // channel tower's feature vector, pre-gate
  std::vector<double> step_feature;              // step tower's feature vector, pre-gate
  RowMat embedding_outputs;  // step-tower embedding + positional encoding, T x d_model
};

enum class Mode { Train, Eval };

/// Fixed sinusoidal position table: even columns sine, odd columns cosine,
/// wavelengths geometric in 10000^(2i/d). Constant (no gradient).
Tensor positional_encoding(std::size_t len, std::size_t d_model);

/// tanh(x . W + b) + positional encoding. x is [T x C] time-major.
Tensor embed_step(const Tensor& x, const TowerParams& tower, const ModelConfig& cfg);

/// Channel tokens: transpose to [C x T], zero anything past true_len, pad
/// time to max_len, then tanh(x . W + b). No positional encoding.
Tensor embed_channel(const Tensor& x, std::size_t true_len, const TowerParams& tower,
                     const ModelConfig& cfg);

/// Scaled dot-product attention over n_heads heads; per-head attention
/// matrices are appended to *attn_out when it is non-null.
Tensor multi_head_attention(const Tensor& x, const Mask* mask, const LayerParams& layer,
                            const ModelConfig& cfg, std::vector<RowMat>* attn_out = nullptr);

/// Post-norm encoder layer: x1 = LN(x + drop(MHA(x))); out = LN(x1 + drop(FFN(x1))).
Tensor encoder_layer(const Tensor& x, const Mask* mask, const LayerParams& layer,
                     const ModelConfig& cfg, Mode mode, Rng* dropout_rng,
                     std::vector<RowMat>* attn_out = nullptr);

/// n_layers encoder layers sharing one mask. Per-layer attention is appended
/// to *attn_layers when capturing.
Tensor encoder_tower(const Tensor& x, const Mask* mask, const TowerParams& tower,
                     const ModelConfig& cfg, Mode mode, Rng* dropout_rng,
                     std::vector<std::vector<RowMat>>* attn_layers = nullptr);

/// Reduces encoder output to a [1 x d_tower] feature: step towers zero rows
/// past true_len and pad to max_len first, then flatten (or mean over real
/// rows), project, tanh.
Tensor tower_feature(const Tensor& encoder_out, std::size_t true_len, bool step_tower,
                     const TowerParams& tower, const ModelConfig& cfg);

struct GateResult {
  Tensor fused;  // [1 x 2*d_tower] = concat(g1*C, g2*S)
  Tensor g1, g2;  // scalars on the tape; g1 + g2 = 1 exactly
};

/// Two-way softmax gate over h = concat(C,S) . W + b. Computed as
/// g1 = sigmoid(h1 - h2), g2 = 1 - g1, which equals softmax(h) and makes the
/// simplex constraint exact in floating point.
GateResult gate_merge(const Tensor& channel_feature, const Tensor& step_feature,
                      const GTNParams& params);

struct ForwardResult {
  Tensor logits;  // [1 x n_classes]
  AttentionRecord record;
};

/// Full forward pass for one (possibly padded) sample. Train mode applies
/// dropout from *dropout_rng and skips the record; eval mode is deterministic
/// and fills the record.
ForwardResult forward(const MTSSample& sample, const GTNParams& params, const ModelConfig& cfg,
                      Mode mode, Rng* dropout_rng = nullptr);

/// Versioned little-endian binary container: ModelConfig JSON, the training
/// seed, and every named parameter. Byte-stable across platforms.
void save_checkpoint(const std::string& path, const GTNParams& params, const ModelConfig& cfg,
                     std::uint64_t seed);

struct Checkpoint {
  GTNParams params;
  ModelConfig config;
  std::uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace gtn
