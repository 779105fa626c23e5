#include <doctest.h>

#include "gtn/errors.hpp"
#include "gtn/interpret.hpp"
#include "gtn/model.hpp"
#include "gtn/text.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

using namespace gtn;

namespace {

ModelConfig toy_config(Variant v) {
  ModelConfig cfg;
  cfg.d_model = 4;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_ff = 6;
  cfg.d_tower = 5;
  cfg.dropout_p = 0.0;
  cfg.n_classes = 2;
  cfg.n_channels = 3;
  cfg.max_len = 6;
  cfg.set_variant(v);
  return cfg;
}

MTSSample make_sample(Rng& rng, std::size_t rows, std::size_t true_len, std::size_t channels,
                      int label) {
  MTSSample s;
  s.values = RowMat(rows, channels);
  for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.values.cols(); ++c) s.values(r, c) = rng.uniform(-1.0, 1.0);
  }
  s.true_len = true_len;
  s.label = label;
  return s;
}

std::vector<double> channel_series(const MTSSample& s, std::size_t c) {
  std::vector<double> out(s.true_len);
  for (std::size_t t = 0; t < s.true_len; ++t) {
    out[t] = s.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
  }
  return out;
}

std::vector<std::vector<double>> parse_matrix(const std::string& path) {
  std::vector<std::vector<double>> rows;
  const std::string text = read_text_file(path);
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    if (!line.empty()) {
      std::vector<double> row;
      for (const std::string& cell : split_csv(line)) row.push_back(parse_double(cell));
      rows.push_back(row);
    }
    start = end + 1;
  }
  return rows;
}

std::string fresh_dir(const std::string& name) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::filesystem::remove_all(path);
  return path;
}

std::map<std::string, std::string> snapshot(const std::vector<std::string>& paths) {
  std::map<std::string, std::string> out;
  for (const std::string& p : paths) out[p] = read_text_file(p);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dynamic time warping
// ---------------------------------------------------------------------------

TEST_CASE("dtw matches hand-computed distances") {
  CHECK(dtw({0.0, 0.0}, {1.0, 2.0}) == 3.0);
  CHECK(dtw({1.0}, {1.0, 1.0, 1.0}) == 0.0);
  CHECK(dtw({1.0, 1.0, 1.0}, {1.0}) == 0.0);
  CHECK(dtw({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);

  Rng rng(11);
  std::vector<double> x(10);
  for (double& v : x) v = rng.uniform(-5.0, 5.0);
  CHECK(dtw(x, x) == 0.0);

  CHECK_THROWS_AS(dtw({}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(dtw({1.0}, {}), std::invalid_argument);
}

TEST_CASE("dtw equals an exhaustive search over every warping path") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0.0, 8.0));
    const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform(0.0, 8.0));
    std::vector<double> a(n), b(m);
    for (double& v : a) v = rng.uniform(-2.0, 2.0);
    for (double& v : b) v = rng.uniform(-2.0, 2.0);
    const double fast = dtw(a, b);
    const double slow = oracle::dtw_exhaustive(a, b);
    CHECK(std::fabs(fast - slow) <= 1e-12);
  }
}

TEST_CASE("dtw is symmetric, non-negative, and bounded by the diagonal path") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0.0, 12.0));
    std::vector<double> a(n), b(n);
    for (double& v : a) v = rng.uniform(-3.0, 3.0);
    for (double& v : b) v = rng.uniform(-3.0, 3.0);

    const double d = dtw(a, b);
    CHECK(d >= 0.0);
    CHECK(std::fabs(d - dtw(b, a)) <= 1e-12);

    double diagonal = 0.0;
    for (std::size_t i = 0; i < n; ++i) diagonal += std::fabs(a[i] - b[i]);
    CHECK(d <= diagonal + 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Distance matrices
// ---------------------------------------------------------------------------

TEST_CASE("channel DTW matrix mirrors per-pair dtw over the real steps") {
  Rng rng(5);
  MTSSample s = make_sample(rng, 6, 4, 3, 0);
  s.values.col(2) = s.values.col(0);  // duplicated channel

  const DistanceMatrix m = channel_dtw_matrix(s);
  CHECK(m.kind == "dtw-channel");
  REQUIRE(m.values.rows() == 3);
  REQUIRE(m.values.cols() == 3);

  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(m.values(i, i) == 0.0);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(m.values(i, j) == m.values(j, i));
  }
  CHECK(m.values(0, 2) == 0.0);

  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double expect = dtw(channel_series(s, i), channel_series(s, j));
      CHECK(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == expect);
    }
  }
}

TEST_CASE("channel DTW matrix ignores padding rows past true_len") {
  Rng rng(6);
  MTSSample a = make_sample(rng, 4, 4, 3, 1);
  MTSSample b = a;
  b.values.conservativeResize(7, Eigen::NoChange);
  for (Eigen::Index r = 4; r < 7; ++r) {
    for (Eigen::Index c = 0; c < 3; ++c) b.values(r, c) = 1e9;  // garbage padding
  }

  const DistanceMatrix ma = channel_dtw_matrix(a);
  const DistanceMatrix mb = channel_dtw_matrix(b);
  CHECK(ma.values == mb.values);

  const DistanceMatrix ea = step_euclid_matrix(a);
  const DistanceMatrix eb = step_euclid_matrix(b);
  CHECK(ea.values.rows() == eb.values.rows());
  CHECK(ea.values == eb.values);
}

TEST_CASE("step Euclid matrix reproduces the 3-4-5 triangle and its invariants") {
  MTSSample tri;
  tri.values = RowMat(2, 2);
  tri.values << 0.0, 0.0, 3.0, 4.0;
  tri.true_len = 2;
  tri.label = 0;
  const DistanceMatrix m = step_euclid_matrix(tri);
  CHECK(m.kind == "euclid-step");
  REQUIRE(m.values.rows() == 2);
  CHECK(m.values(0, 1) == 5.0);
  CHECK(m.values(1, 0) == 5.0);
  CHECK(m.values(0, 0) == 0.0);
  CHECK(m.values(1, 1) == 0.0);

  MTSSample flat;
  flat.values = RowMat::Constant(5, 3, 0.25);
  flat.true_len = 5;
  flat.label = 0;
  CHECK((step_euclid_matrix(flat).values.array() == 0.0).all());

  Rng rng(8);
  const MTSSample s = make_sample(rng, 6, 5, 3, 0);
  const DistanceMatrix e = step_euclid_matrix(s);
  REQUIRE(e.values.rows() == 5);  // only the real steps
  for (Eigen::Index p = 0; p < 5; ++p) {
    CHECK(e.values(p, p) == 0.0);
    for (Eigen::Index q = 0; q < 5; ++q) {
      CHECK(e.values(p, q) == e.values(q, p));
      double sq = 0.0;
      for (Eigen::Index c = 0; c < 3; ++c) {
        const double d = s.values(p, c) - s.values(q, c);
        sq += d * d;
      }
      CHECK(std::fabs(e.values(p, q) - std::sqrt(sq)) <= 1e-12);
      for (Eigen::Index u = 0; u < 5; ++u) {
        CHECK(e.values(p, q) <= e.values(p, u) + e.values(u, q) + 1e-12);
      }
    }
  }
}

TEST_CASE("matrix_csv renders shortest round-trip doubles") {
  RowMat m(2, 2);
  m << 1.0, 2.5, -3.0, 0.1;
  CHECK(matrix_csv(m) == "1,2.5\n-3,0.1\n");
}

// ---------------------------------------------------------------------------
// Attention export
// ---------------------------------------------------------------------------

TEST_CASE("attention export writes row-stochastic maps, exact head means, and a manifest") {
  const ModelConfig cfg = toy_config(Variant::Gated);
  const GTNParams params = GTNParams::init(cfg, Rng(7));
  Rng rng(17);
  const MTSSample sample = make_sample(rng, 6, 4, 3, 1);

  const std::string dir = fresh_dir("gtn_test_attention");
  const std::vector<std::string> written = export_attention(params, cfg, sample, dir, 3);

  // 1 layer x (2 heads + mean) per tower, two distance matrices, one manifest
  REQUIRE(written.size() == 9);
  CHECK(std::filesystem::path(written.back()).filename() == "manifest.json");
  for (const std::string& p : written) CHECK(std::filesystem::exists(p));

  auto path_of = [&](const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
  };

  // every attention row is a distribution
  for (const std::string& tower : {"step", "channel"}) {
    const Eigen::Index extent = tower == "step" ? 6 : 3;
    std::vector<std::vector<std::vector<double>>> heads;
    for (int h = 0; h < 2; ++h) {
      const auto mat = parse_matrix(path_of("attention_" + tower + "_l0_head" +
                                            std::to_string(h) + ".csv"));
      REQUIRE(static_cast<Eigen::Index>(mat.size()) == extent);
      for (const auto& row : mat) {
        REQUIRE(static_cast<Eigen::Index>(row.size()) == extent);
        double sum = 0.0;
        for (const double v : row) {
          CHECK(v >= 0.0);
          sum += v;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
      }
      heads.push_back(mat);
    }
    // padded steps never receive attention weight under the padding mask
    if (tower == "step") {
      for (const auto& mat : heads) {
        for (const auto& row : mat) {
          for (std::size_t k = sample.true_len; k < row.size(); ++k) CHECK(row[k] == 0.0);
        }
      }
    }
    const auto mean = parse_matrix(path_of("attention_" + tower + "_l0_mean.csv"));
    for (std::size_t r = 0; r < mean.size(); ++r) {
      for (std::size_t c = 0; c < mean[r].size(); ++c) {
        CHECK(mean[r][c] == (heads[0][r][c] + heads[1][r][c]) / 2.0);
      }
    }
  }

  // distance matrices match the direct computation byte for byte
  CHECK(read_text_file(path_of("dtw_channel.csv")) ==
        matrix_csv(channel_dtw_matrix(sample).values));
  CHECK(read_text_file(path_of("euclid_step.csv")) ==
        matrix_csv(step_euclid_matrix(sample).values));

  const nlohmann::json manifest = nlohmann::json::parse(read_text_file(path_of("manifest.json")));
  CHECK(manifest.at("sample_id") == 3);
  CHECK(manifest.at("label") == 1);
  CHECK(manifest.at("true_len") == 4);
  CHECK(manifest.at("variant") == "gated");
  CHECK(manifest.at("n_layers") == 1);
  CHECK(manifest.at("n_heads") == 2);
  REQUIRE(manifest.at("files").size() == written.size() - 1);
  std::size_t attention_entries = 0;
  for (const auto& entry : manifest.at("files")) {
    CHECK(entry.contains("file"));
    CHECK(entry.contains("kind"));
    if (entry.at("kind") == "attention") {
      ++attention_entries;
      CHECK(entry.contains("tower"));
      CHECK(entry.contains("layer"));
      CHECK(entry.contains("head"));
    }
  }
  CHECK(attention_entries == 6);

  // re-export reproduces every file byte for byte
  const auto before = snapshot(written);
  const std::vector<std::string> again = export_attention(params, cfg, sample, dir, 3);
  CHECK(again == written);
  CHECK(snapshot(again) == before);

  std::filesystem::remove_all(dir);
}

TEST_CASE("attention export for a single-tower variant skips the missing tower") {
  const ModelConfig cfg = toy_config(Variant::StepMask);
  const GTNParams params = GTNParams::init(cfg, Rng(9));
  Rng rng(20);
  const MTSSample sample = make_sample(rng, 5, 5, 3, 0);

  const std::string dir = fresh_dir("gtn_test_attention_step");
  const std::vector<std::string> written = export_attention(params, cfg, sample, dir, 0);

  // 3 step attention files + 2 distance matrices + manifest, nothing channel-wise
  REQUIRE(written.size() == 6);
  for (const std::string& p : written) {
    CHECK(std::filesystem::path(p).filename().string().find("attention_channel") ==
          std::string::npos);
  }
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "dtw_channel.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "euclid_step.csv"));

  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Gate statistics
// ---------------------------------------------------------------------------

TEST_CASE("gate stats stay on the exact simplex") {
  const ModelConfig cfg = toy_config(Variant::Gated);
  GTNParams params = GTNParams::init(cfg, Rng(3));

  Rng rng(40);
  std::vector<MTSSample> split;
  for (int i = 0; i < 5; ++i) split.push_back(make_sample(rng, 6, 4 + i % 3, 3, i % 2));

  const GateStats stats = gate_stats(params, cfg, split);
  REQUIRE(stats.pairs.size() == 5);
  for (const auto& pair : stats.pairs) {
    CHECK(pair[0] >= 0.0);
    CHECK(pair[0] <= 1.0);
    CHECK(pair[0] + pair[1] == 1.0);
  }
  CHECK(stats.mean[0] + stats.mean[1] == 1.0);

  // zeroed gate: both towers score identically, so every pair is (0.5, 0.5)
  params.visit([](const std::string& name, Tensor& t) {
    if (name == "gate.w" || name == "gate.b") t.leaf_values().setZero();
  });
  const GateStats even = gate_stats(params, cfg, split);
  for (const auto& pair : even.pairs) {
    CHECK(pair[0] == 0.5);
    CHECK(pair[1] == 0.5);
  }
  CHECK(even.mean[0] == 0.5);
  CHECK(even.mean[1] == 0.5);
}

TEST_CASE("gate stats reject gateless variants and empty splits") {
  Rng rng(41);
  const std::vector<MTSSample> split = {make_sample(rng, 4, 4, 3, 0)};

  const ModelConfig concat = toy_config(Variant::Concat);
  const GTNParams cp = GTNParams::init(concat, Rng(1));
  CHECK_THROWS_AS(gate_stats(cp, concat, split), std::invalid_argument);

  const ModelConfig gated = toy_config(Variant::Gated);
  const GTNParams gp = GTNParams::init(gated, Rng(1));
  CHECK_THROWS_AS(gate_stats(gp, gated, {}), DataError);
}

// ---------------------------------------------------------------------------
// Embedding export
// ---------------------------------------------------------------------------

TEST_CASE("embedding export counts real steps and rebuilds classifier inputs") {
  const ModelConfig cfg = toy_config(Variant::Gated);
  const GTNParams params = GTNParams::init(cfg, Rng(13));

  Rng rng(50);
  std::vector<MTSSample> split;
  split.push_back(make_sample(rng, 6, 4, 3, 0));
  split.push_back(make_sample(rng, 6, 6, 3, 1));
  split.push_back(make_sample(rng, 6, 5, 3, 0));

  const std::string dir = fresh_dir("gtn_test_embed");
  const std::vector<std::string> written = export_embeddings(params, cfg, split, dir);
  REQUIRE(written.size() == 2);
  CHECK(std::filesystem::path(written[0]).filename() == "embeddings.csv");
  CHECK(std::filesystem::path(written[1]).filename() == "features.csv");

  const auto embed_lines = [&] {
    std::vector<std::vector<std::string>> rows;
    const std::string text = read_text_file(written[0]);
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) rows.push_back(split_csv(text.substr(start, end - start)));
      start = end + 1;
    }
    return rows;
  }();

  REQUIRE(embed_lines.size() == 1 + 4 + 6 + 5);  // header + sum of true_len
  REQUIRE(embed_lines[0].size() == 3 + cfg.d_model);
  CHECK(embed_lines[0][0] == "sample");
  CHECK(embed_lines[0][3] == "e0");

  // spot-check every value of the first sample against a fresh forward pass
  const ForwardResult fwd = forward(split[0], params, cfg, Mode::Eval);
  for (std::size_t t = 0; t < split[0].true_len; ++t) {
    const auto& row = embed_lines[1 + t];
    CHECK(row[0] == "0");
    CHECK(row[1] == std::to_string(t));
    CHECK(row[2] == "0");
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      CHECK(parse_double(row[3 + j]) ==
            fwd.record.embedding_outputs(static_cast<Eigen::Index>(t),
                                         static_cast<Eigen::Index>(j)));
    }
  }

  const auto feat_lines = [&] {
    std::vector<std::vector<std::string>> rows;
    const std::string text = read_text_file(written[1]);
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) rows.push_back(split_csv(text.substr(start, end - start)));
      start = end + 1;
    }
    return rows;
  }();

  REQUIRE(feat_lines.size() == 1 + split.size());
  REQUIRE(feat_lines[0].size() == 2 + cfg.classifier_width());

  // the gated feature vector is the gate-scaled concatenation of tower features
  const AttentionRecord& rec = fwd.record;
  const auto& row = feat_lines[1];
  CHECK(row[0] == "0");
  CHECK(row[1] == "0");
  const std::size_t half = rec.channel_feature.size();
  for (std::size_t j = 0; j < half; ++j) {
    CHECK(parse_double(row[2 + j]) == rec.gate_weights[0] * rec.channel_feature[j]);
  }
  for (std::size_t j = 0; j < rec.step_feature.size(); ++j) {
    CHECK(parse_double(row[2 + half + j]) == rec.gate_weights[1] * rec.step_feature[j]);
  }

  // deterministic re-export
  const auto before = snapshot(written);
  export_embeddings(params, cfg, split, dir);
  CHECK(snapshot(written) == before);

  std::filesystem::remove_all(dir);
}

TEST_CASE("embedding export skips embeddings.csv for channel-only variants") {
  const ModelConfig cfg = toy_config(Variant::Channel);
  const GTNParams params = GTNParams::init(cfg, Rng(14));
  Rng rng(51);
  const std::vector<MTSSample> split = {make_sample(rng, 5, 5, 3, 1)};

  const std::string dir = fresh_dir("gtn_test_embed_channel");
  const std::vector<std::string> written = export_embeddings(params, cfg, split, dir);
  REQUIRE(written.size() == 1);
  CHECK(std::filesystem::path(written[0]).filename() == "features.csv");
  CHECK(!std::filesystem::exists(std::filesystem::path(dir) / "embeddings.csv"));

  const std::string header = read_text_file(written[0]);
  CHECK(split_csv(header.substr(0, header.find('\n'))).size() == 2 + cfg.classifier_width());

  CHECK_THROWS_AS(export_embeddings(params, cfg, {}, dir), DataError);

  std::filesystem::remove_all(dir);
}
