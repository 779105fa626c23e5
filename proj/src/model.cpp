#include "gtn/model.hpp"

#include "gtn/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

using nlohmann::json;

namespace gtn {

// ---------------------------------------------------------------------------
// Variants and configuration
// ---------------------------------------------------------------------------

const std::array<Variant, 6>& all_variants() {
  static const std::array<Variant, 6> order = {Variant::Step,        Variant::StepMask,
                                               Variant::Channel,     Variant::ChannelMask,
                                               Variant::Concat,      Variant::Gated};
  return order;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Step: return "step";
    case Variant::StepMask: return "step+mask";
    case Variant::Channel: return "channel";
    case Variant::ChannelMask: return "channel+mask";
    case Variant::Concat: return "concat";
    case Variant::Gated: return "gated";
  }
  throw std::invalid_argument("variant_name: unknown variant");
}

Variant parse_variant(const std::string& name) {
  for (const Variant v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected step, step+mask, channel, channel+mask, concat, gated)");
}

bool ModelConfig::uses_step_tower() const {
  return variant != Variant::Channel && variant != Variant::ChannelMask;
}

bool ModelConfig::uses_channel_tower() const {
  return variant != Variant::Step && variant != Variant::StepMask;
}

std::size_t ModelConfig::classifier_width() const {
  return (uses_step_tower() && uses_channel_tower()) ? 2 * d_tower : d_tower;
}

std::size_t ModelConfig::feature_input_width(bool step_tower) const {
  if (feature_pool == FeaturePool::Mean) return d_model;
  return (step_tower ? max_len : n_channels) * d_model;
}

void ModelConfig::set_variant(Variant v) {
  variant = v;
  switch (v) {
    case Variant::Step:
    case Variant::Channel:
      use_causal_mask_step = use_causal_mask_channel = use_padding_mask = false;
      break;
    case Variant::StepMask:
      use_causal_mask_step = use_padding_mask = true;
      use_causal_mask_channel = false;
      break;
    case Variant::ChannelMask:
      use_causal_mask_channel = true;
      use_causal_mask_step = use_padding_mask = false;
      break;
    case Variant::Concat:
    case Variant::Gated:
      use_causal_mask_step = use_causal_mask_channel = use_padding_mask = true;
      break;
  }
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || d_tower == 0) {
    throw std::invalid_argument("config: model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("config: d_model (" + std::to_string(d_model) +
                                ") must be divisible by n_heads (" + std::to_string(n_heads) +
                                ")");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw std::invalid_argument("config: dropout must be in [0, 1)");
  }
  if (ln_eps <= 0.0) throw std::invalid_argument("config: ln_eps must be positive");
  if (n_classes == 0) throw std::invalid_argument("config: n_classes must be positive");
  if (n_channels == 0) throw std::invalid_argument("config: n_channels must be positive");
  if (max_len == 0) throw std::invalid_argument("config: max_len must be positive");
}

std::string config_to_json_string(const ModelConfig& cfg) {
  const json j{{"d_model", cfg.d_model},
               {"n_heads", cfg.n_heads},
               {"n_layers", cfg.n_layers},
               {"d_ff", cfg.d_ff},
               {"d_tower", cfg.d_tower},
               {"dropout", cfg.dropout_p},
               {"ln_eps", cfg.ln_eps},
               {"feature_pool", cfg.feature_pool == FeaturePool::Mean ? "mean" : "flatten"},
               {"variant", variant_name(cfg.variant)},
               {"use_causal_mask_step", cfg.use_causal_mask_step},
               {"use_causal_mask_channel", cfg.use_causal_mask_channel},
               {"use_padding_mask", cfg.use_padding_mask},
               {"n_classes", cfg.n_classes},
               {"n_channels", cfg.n_channels},
               {"max_len", cfg.max_len}};
  return j.dump();
}

ModelConfig config_from_json_string(const std::string& text) {
  ModelConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.n_heads = j.at("n_heads").get<std::size_t>();
    cfg.n_layers = j.at("n_layers").get<std::size_t>();
    cfg.d_ff = j.at("d_ff").get<std::size_t>();
    cfg.d_tower = j.at("d_tower").get<std::size_t>();
    cfg.dropout_p = j.at("dropout").get<double>();
    cfg.ln_eps = j.at("ln_eps").get<double>();
    const std::string pool = j.at("feature_pool").get<std::string>();
    if (pool == "flatten") {
      cfg.feature_pool = FeaturePool::Flatten;
    } else if (pool == "mean") {
      cfg.feature_pool = FeaturePool::Mean;
    } else {
      throw std::invalid_argument("config: unknown feature_pool '" + pool + "'");
    }
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
    cfg.use_causal_mask_step = j.at("use_causal_mask_step").get<bool>();
    cfg.use_causal_mask_channel = j.at("use_causal_mask_channel").get<bool>();
    cfg.use_padding_mask = j.at("use_padding_mask").get<bool>();
    cfg.n_classes = j.at("n_classes").get<std::size_t>();
    cfg.n_channels = j.at("n_channels").get<std::size_t>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

namespace {

enum class ParamKind { Weight, Bias, Gain };

using MakeFn = std::function<Tensor(const std::string&, Shape, ParamKind)>;

GTNParams build_params(const ModelConfig& cfg, const MakeFn& make) {
  const std::size_t d = cfg.d_model;
  auto build_tower = [&](const std::string& prefix, bool is_step) {
    TowerParams t;
    const std::size_t in = is_step ? cfg.n_channels : cfg.max_len;
    t.embed_w = make(prefix + ".embed.w", {in, d}, ParamKind::Weight);
    t.embed_b = make(prefix + ".embed.b", {d}, ParamKind::Bias);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
      const std::string base = prefix + ".l" + std::to_string(i) + ".";
      LayerParams l;
      l.wq = make(base + "wq", {d, d}, ParamKind::Weight);
      l.wk = make(base + "wk", {d, d}, ParamKind::Weight);
      l.wv = make(base + "wv", {d, d}, ParamKind::Weight);
      l.wo = make(base + "wo", {d, d}, ParamKind::Weight);
      l.ln1_g = make(base + "ln1_g", {d}, ParamKind::Gain);
      l.ln1_b = make(base + "ln1_b", {d}, ParamKind::Bias);
      l.ff_w1 = make(base + "ff_w1", {d, cfg.d_ff}, ParamKind::Weight);
      l.ff_b1 = make(base + "ff_b1", {cfg.d_ff}, ParamKind::Bias);
      l.ff_w2 = make(base + "ff_w2", {cfg.d_ff, d}, ParamKind::Weight);
      l.ff_b2 = make(base + "ff_b2", {d}, ParamKind::Bias);
      l.ln2_g = make(base + "ln2_g", {d}, ParamKind::Gain);
      l.ln2_b = make(base + "ln2_b", {d}, ParamKind::Bias);
      t.layers.push_back(std::move(l));
    }
    t.feature_w = make(prefix + ".feature.w", {cfg.feature_input_width(is_step), cfg.d_tower},
                       ParamKind::Weight);
    t.feature_b = make(prefix + ".feature.b", {cfg.d_tower}, ParamKind::Bias);
    return t;
  };

  GTNParams p;
  if (cfg.uses_step_tower()) p.step = build_tower("step", true);
  if (cfg.uses_channel_tower()) p.channel = build_tower("channel", false);
  if (cfg.variant == Variant::Gated) {
    p.gate_w = make("gate.w", {2 * cfg.d_tower, 2}, ParamKind::Weight);
    p.gate_b = make("gate.b", {2}, ParamKind::Bias);
  }
  p.head_w = make("head.w", {cfg.classifier_width(), cfg.n_classes}, ParamKind::Weight);
  p.head_b = make("head.b", {cfg.n_classes}, ParamKind::Bias);
  return p;
}

// Single enumeration used by both visit overloads; must list parameters in
// exactly the order build_params creates them.
template <typename Params, typename Fn>
void walk_params(Params& p, Fn&& fn) {
  auto walk_tower = [&fn](const std::string& prefix, auto& t) {
    fn(prefix + ".embed.w", t.embed_w);
    fn(prefix + ".embed.b", t.embed_b);
    for (std::size_t i = 0; i < t.layers.size(); ++i) {
      const std::string base = prefix + ".l" + std::to_string(i) + ".";
      auto& l = t.layers[i];
      fn(base + "wq", l.wq);
      fn(base + "wk", l.wk);
      fn(base + "wv", l.wv);
      fn(base + "wo", l.wo);
      fn(base + "ln1_g", l.ln1_g);
      fn(base + "ln1_b", l.ln1_b);
      fn(base + "ff_w1", l.ff_w1);
      fn(base + "ff_b1", l.ff_b1);
      fn(base + "ff_w2", l.ff_w2);
      fn(base + "ff_b2", l.ff_b2);
      fn(base + "ln2_g", l.ln2_g);
      fn(base + "ln2_b", l.ln2_b);
    }
    fn(prefix + ".feature.w", t.feature_w);
    fn(prefix + ".feature.b", t.feature_b);
  };
  if (p.step) walk_tower("step", *p.step);
  if (p.channel) walk_tower("channel", *p.channel);
  if (p.gate_w.defined()) {
    fn("gate.w", p.gate_w);
    fn("gate.b", p.gate_b);
  }
  fn("head.w", p.head_w);
  fn("head.b", p.head_b);
}

}  // namespace

GTNParams GTNParams::init(const ModelConfig& cfg, const Rng& base) {
  cfg.validate();
  const MakeFn make = [&base](const std::string& name, Shape shape, ParamKind kind) {
    const std::size_t n = numel(shape);
    Array a(static_cast<Eigen::Index>(n));
    switch (kind) {
      case ParamKind::Weight: {
        Rng rng = base.derive("init/" + name);
        const double limit =
            std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(-limit, limit);
        break;
      }
      case ParamKind::Bias: a.setZero(); break;
      case ParamKind::Gain: a.setOnes(); break;
    }
    return Tensor::from_array(std::move(shape), std::move(a), /*requires_grad=*/true);
  };
  return build_params(cfg, make);
}

void GTNParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  walk_params(*this, fn);
}

void GTNParams::visit(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  walk_params(*this, fn);
}

GTNParams GTNParams::clone() const {
  GTNParams out = *this;  // copies the shared handles...
  out.visit([](const std::string&, Tensor& t) {  // ...then repoints each at a fresh leaf
    t = Tensor::from_array(t.shape(), t.values(), t.requires_grad());
  });
  return out;
}

// ---------------------------------------------------------------------------
// Architecture blocks
// ---------------------------------------------------------------------------

Tensor positional_encoding(std::size_t len, std::size_t d_model) {
  if (len == 0 || d_model == 0) {
    throw std::invalid_argument("positional_encoding: len and d_model must be positive");
  }
  Array a(static_cast<Eigen::Index>(len * d_model));
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t j = 0; j < d_model; ++j) {
      const std::size_t i = j / 2;
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) /
                                                 static_cast<double>(d_model));
      a[static_cast<Eigen::Index>(pos * d_model + j)] =
          (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_array({len, d_model}, std::move(a));
}

namespace {

void check_series_input(const Tensor& x, const ModelConfig& cfg, const char* where) {
  if (x.rank() != 2) {
    throw std::invalid_argument(std::string(where) + ": expected [T x C] input, got " +
                                shape_str(x.shape()));
  }
  if (x.shape()[1] != cfg.n_channels) {
    throw std::invalid_argument(std::string(where) + ": sample has " +
                                std::to_string(x.shape()[1]) + " channels, config declares " +
                                std::to_string(cfg.n_channels));
  }
  if (x.shape()[0] == 0) throw std::invalid_argument(std::string(where) + ": empty series");
  if (x.shape()[0] > cfg.max_len) {
    throw std::invalid_argument(std::string(where) + ": series length " +
                                std::to_string(x.shape()[0]) + " exceeds max_len " +
                                std::to_string(cfg.max_len));
  }
}

}  // namespace

Tensor embed_step(const Tensor& x, const TowerParams& tower, const ModelConfig& cfg) {
  check_series_input(x, cfg, "embed_step");
  Tensor emb = tanh(add_rowvec(matmul(x, tower.embed_w), tower.embed_b));
  return add(emb, positional_encoding(x.shape()[0], cfg.d_model));
}

Tensor embed_channel(const Tensor& x, std::size_t true_len, const TowerParams& tower,
                     const ModelConfig& cfg) {
  check_series_input(x, cfg, "embed_channel");
  const std::size_t len = x.shape()[0];
  if (true_len == 0 || true_len > len) {
    throw std::invalid_argument("embed_channel: true_len " + std::to_string(true_len) +
                                " out of range for " + std::to_string(len) + " rows");
  }
  Tensor tokens = transpose(x);  // [C x T], one row per channel
  if (true_len < len) {
    // hide batch padding from the channel tokens
    Array keep(static_cast<Eigen::Index>(cfg.n_channels * len));
    for (std::size_t c = 0; c < cfg.n_channels; ++c) {
      for (std::size_t t = 0; t < len; ++t) {
        keep[static_cast<Eigen::Index>(c * len + t)] = t < true_len ? 1.0 : 0.0;
      }
    }
    tokens = mul(tokens, Tensor::from_array({cfg.n_channels, len}, std::move(keep)));
  }
  if (len < cfg.max_len) {
    tokens = concat({tokens, Tensor::zeros({cfg.n_channels, cfg.max_len - len})}, 1);
  }
  return tanh(add_rowvec(matmul(tokens, tower.embed_w), tower.embed_b));
}

Tensor multi_head_attention(const Tensor& x, const Mask* mask, const LayerParams& layer,
                            const ModelConfig& cfg, std::vector<RowMat>* attn_out) {
  if (x.rank() != 2 || x.shape()[1] != cfg.d_model) {
    throw std::invalid_argument("multi_head_attention: expected [n x d_model], got " +
                                shape_str(x.shape()));
  }
  const std::size_t dk = cfg.d_model / cfg.n_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Tensor q = matmul(x, layer.wq);
  const Tensor k = matmul(x, layer.wk);
  const Tensor v = matmul(x, layer.wv);
  std::vector<Tensor> heads;
  heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const Tensor qh = slice(q, 1, h * dk, dk);
    const Tensor kh = slice(k, 1, h * dk, dk);
    const Tensor vh = slice(v, 1, h * dk, dk);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
    const Tensor attn = softmax(scores, 1, mask);
    if (attn_out) attn_out->push_back(attn.matrix());
    heads.push_back(matmul(attn, vh));
  }
  return matmul(concat(heads, 1), layer.wo);
}

Tensor encoder_layer(const Tensor& x, const Mask* mask, const LayerParams& layer,
                     const ModelConfig& cfg, Mode mode, Rng* dropout_rng,
                     std::vector<RowMat>* attn_out) {
  const bool training = mode == Mode::Train;
  if (training && cfg.dropout_p > 0.0 && dropout_rng == nullptr) {
    throw std::invalid_argument("encoder_layer: train mode with dropout needs an rng");
  }
  auto drop = [&](const Tensor& t) {
    if (!training || cfg.dropout_p == 0.0) return t;
    return dropout(t, cfg.dropout_p, *dropout_rng, true);
  };
  const Tensor attn = multi_head_attention(x, mask, layer, cfg, attn_out);
  const Tensor x1 = layer_norm(add(x, drop(attn)), layer.ln1_g, layer.ln1_b, cfg.ln_eps);
  const Tensor hidden = relu(add_rowvec(matmul(x1, layer.ff_w1), layer.ff_b1));
  const Tensor ff = add_rowvec(matmul(hidden, layer.ff_w2), layer.ff_b2);
  return layer_norm(add(x1, drop(ff)), layer.ln2_g, layer.ln2_b, cfg.ln_eps);
}

Tensor encoder_tower(const Tensor& x, const Mask* mask, const TowerParams& tower,
                     const ModelConfig& cfg, Mode mode, Rng* dropout_rng,
                     std::vector<std::vector<RowMat>>* attn_layers) {
  Tensor h = x;
  for (const LayerParams& layer : tower.layers) {
    std::vector<RowMat> per_head;
    h = encoder_layer(h, mask, layer, cfg, mode, dropout_rng,
                      attn_layers ? &per_head : nullptr);
    if (attn_layers) attn_layers->push_back(std::move(per_head));
  }
  return h;
}

Tensor tower_feature(const Tensor& encoder_out, std::size_t true_len, bool step_tower,
                     const TowerParams& tower, const ModelConfig& cfg) {
  if (encoder_out.rank() != 2 || encoder_out.shape()[1] != cfg.d_model) {
    throw std::invalid_argument("tower_feature: expected [n x d_model], got " +
                                shape_str(encoder_out.shape()));
  }
  const std::size_t n = encoder_out.shape()[0];
  Tensor h = encoder_out;
  std::size_t real_rows = n;
  if (step_tower) {
    if (n > cfg.max_len) {
      throw std::invalid_argument("tower_feature: " + std::to_string(n) +
                                  " rows exceed max_len " + std::to_string(cfg.max_len));
    }
    if (true_len == 0 || true_len > n) {
      throw std::invalid_argument("tower_feature: true_len " + std::to_string(true_len) +
                                  " out of range for " + std::to_string(n) + " rows");
    }
    if (true_len < n) {  // zero padded rows so they cannot leak into the feature
      Array keep(static_cast<Eigen::Index>(n * cfg.d_model));
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < cfg.d_model; ++c) {
          keep[static_cast<Eigen::Index>(r * cfg.d_model + c)] = r < true_len ? 1.0 : 0.0;
        }
      }
      h = mul(h, Tensor::from_array({n, cfg.d_model}, std::move(keep)));
    }
    if (n < cfg.max_len) {
      h = concat({h, Tensor::zeros({cfg.max_len - n, cfg.d_model})}, 0);
    }
    real_rows = true_len;
  } else if (n != cfg.n_channels) {
    throw std::invalid_argument("tower_feature: " + std::to_string(n) +
                                " channel tokens, config declares " +
                                std::to_string(cfg.n_channels));
  }

  Tensor flat;
  if (cfg.feature_pool == FeaturePool::Flatten) {
    flat = reshape(h, {1, h.shape()[0] * cfg.d_model});
  } else {
    // mean over real rows; padded rows are already zero
    flat = scale(matmul(Tensor::full({1, h.shape()[0]}, 1.0), h),
                 1.0 / static_cast<double>(real_rows));
  }
  if (flat.shape()[1] != tower.feature_w.shape()[0]) {
    throw std::invalid_argument("tower_feature: flattened width " +
                                std::to_string(flat.shape()[1]) +
                                " does not match the feature projection " +
                                shape_str(tower.feature_w.shape()));
  }
  return tanh(add_rowvec(matmul(flat, tower.feature_w), tower.feature_b));
}

GateResult gate_merge(const Tensor& channel_feature, const Tensor& step_feature,
                      const GTNParams& params) {
  if (!params.gate_w.defined()) {
    throw std::invalid_argument("gate_merge: this model has no gate parameters");
  }
  const Tensor both = concat({channel_feature, step_feature}, 1);
  const Tensor h = add_rowvec(matmul(both, params.gate_w), params.gate_b);
  const Tensor h1 = slice(h, 1, 0, 1);
  const Tensor h2 = slice(h, 1, 1, 1);
  GateResult out;
  // softmax over two logits, written so g1 + g2 == 1 holds exactly
  out.g1 = sigmoid(sub(h1, h2));
  out.g2 = sub(Tensor::full({1, 1}, 1.0), out.g1);
  out.fused =
      concat({scale_by(channel_feature, out.g1), scale_by(step_feature, out.g2)}, 1);
  return out;
}

ForwardResult forward(const MTSSample& sample, const GTNParams& params, const ModelConfig& cfg,
                      Mode mode, Rng* dropout_rng) {
  cfg.validate();
  const std::size_t rows = static_cast<std::size_t>(sample.values.rows());
  if (sample.true_len == 0 || sample.true_len > rows) {
    throw std::invalid_argument("forward: true_len " + std::to_string(sample.true_len) +
                                " out of range for " + std::to_string(rows) + " rows");
  }
  const Tensor x = Tensor::from_matrix(sample.values);
  const bool capture = mode == Mode::Eval;

  ForwardResult result;
  Tensor step_feat, chan_feat;

  if (cfg.uses_step_tower()) {
    if (!params.step) throw std::invalid_argument("forward: step tower parameters missing");
    const Tensor embedded = embed_step(x, *params.step, cfg);
    if (capture) result.record.embedding_outputs = embedded.matrix();

    Mask mask;
    const Mask* mask_ptr = nullptr;
    const bool pad = cfg.use_padding_mask;
    if (cfg.use_causal_mask_step && pad) {
      mask = mask_and(causal_mask(rows), padding_mask(sample.true_len, rows));
      mask_ptr = &mask;
    } else if (cfg.use_causal_mask_step) {
      mask = causal_mask(rows);
      mask_ptr = &mask;
    } else if (pad) {
      mask = padding_mask(sample.true_len, rows);
      mask_ptr = &mask;
    }
    const Tensor encoded =
        encoder_tower(embedded, mask_ptr, *params.step, cfg, mode, dropout_rng,
                      capture ? &result.record.step_attention : nullptr);
    step_feat = tower_feature(encoded, sample.true_len, true, *params.step, cfg);
    if (capture) {
      result.record.step_feature.assign(step_feat.values().data(),
                                        step_feat.values().data() + step_feat.size());
    }
  }

  if (cfg.uses_channel_tower()) {
    if (!params.channel) throw std::invalid_argument("forward: channel tower parameters missing");
    const Tensor embedded = embed_channel(x, sample.true_len, *params.channel, cfg);
    Mask mask;
    const Mask* mask_ptr = nullptr;
    if (cfg.use_causal_mask_channel) {
      mask = causal_mask(cfg.n_channels);
      mask_ptr = &mask;
    }
    const Tensor encoded =
        encoder_tower(embedded, mask_ptr, *params.channel, cfg, mode, dropout_rng,
                      capture ? &result.record.channel_attention : nullptr);
    chan_feat = tower_feature(encoded, cfg.n_channels, false, *params.channel, cfg);
    if (capture) {
      result.record.channel_feature.assign(chan_feat.values().data(),
                                           chan_feat.values().data() + chan_feat.size());
    }
  }

  Tensor z;
  switch (cfg.variant) {
    case Variant::Step:
    case Variant::StepMask: z = step_feat; break;
    case Variant::Channel:
    case Variant::ChannelMask: z = chan_feat; break;
    case Variant::Concat: z = concat({chan_feat, step_feat}, 1); break;
    case Variant::Gated: {
      const GateResult gate = gate_merge(chan_feat, step_feat, params);
      z = gate.fused;
      if (capture) {
        result.record.has_gate = true;
        result.record.gate_weights = {gate.g1[0], gate.g2[0]};
      }
      break;
    }
  }
  result.logits = add_rowvec(matmul(z, params.head_w), params.head_b);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'T', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const GTNParams& params, const ModelConfig& cfg,
                     std::uint64_t seed) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  const std::string config = config_to_json_string(cfg);
  put_u64(out, config.size());
  out += config;
  put_u64(out, seed);

  std::uint32_t count = 0;
  params.visit([&count](const std::string&, const Tensor&) { ++count; });
  put_u32(out, count);
  params.visit([&out](const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (const std::size_t dim : t.shape()) put_u64(out, dim);
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
  });

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  ByteReader r{buf};
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError(path + ": not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint64_t config_len = r.u64();
  try {
    ckpt.config = config_from_json_string(r.bytes(config_len));
  } catch (const std::exception& e) {
    throw DataError(path + ": bad embedded config: " + e.what());
  }
  ckpt.seed = r.u64();

  std::map<std::string, std::pair<Shape, Array>> stored;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = r.u64();
    Array values(static_cast<Eigen::Index>(numel(shape)));
    for (Eigen::Index j = 0; j < values.size(); ++j) values[j] = r.f64();
    if (!stored.emplace(name, std::make_pair(std::move(shape), std::move(values))).second) {
      throw DataError(path + ": duplicate parameter '" + name + "'");
    }
  }

  std::size_t used = 0;
  const MakeFn make = [&](const std::string& name, Shape shape, ParamKind) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw DataError(path + ": missing parameter '" + name + "'");
    if (it->second.first != shape) {
      throw DataError(path + ": parameter '" + name + "' has shape " +
                      shape_str(it->second.first) + ", expected " + shape_str(shape));
    }
    ++used;
    return Tensor::from_array(std::move(shape), it->second.second, /*requires_grad=*/true);
  };
  ckpt.params = build_params(ckpt.config, make);
  if (used != stored.size()) {
    throw DataError(path + ": file contains parameters the config does not declare");
  }
  return ckpt;
}

}  // namespace gtn
