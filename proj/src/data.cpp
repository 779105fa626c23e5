#include "gtn/data.hpp"

#include "gtn/errors.hpp"
#include "gtn/text.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gtn {

namespace {

constexpr const char* kSplits[2] = {"train", "test"};

MTSSample load_sample(const std::string& path, std::size_t n_channels, std::size_t max_len,
                      int label, std::size_t n_classes) {
  if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
    throw DataError(path + ": label " + std::to_string(label) + " out of range [0, " +
                    std::to_string(n_classes) + ")");
  }
  std::istringstream in(read_text_file(path));
  std::vector<double> flat;
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != n_channels) {
      throw DataError(path + ": row " + std::to_string(rows) + " has " +
                      std::to_string(fields.size()) + " channels, dataset declares " +
                      std::to_string(n_channels));
    }
    for (const std::string& f : fields) {
      double v;
      try {
        v = parse_double(f);
      } catch (const std::exception&) {
        throw DataError(path + ": row " + std::to_string(rows) + ": not a number: '" + f + "'");
      }
      if (!std::isfinite(v)) {
        throw DataError(path + ": row " + std::to_string(rows) + ": non-finite value");
      }
      flat.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError(path + ": empty sample");
  if (rows > max_len) {
    throw DataError(path + ": " + std::to_string(rows) + " steps exceed max_len " +
                    std::to_string(max_len));
  }
  MTSSample s;
  s.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_channels));
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t c = 0; c < n_channels; ++c) {
      s.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
          flat[t * n_channels + c];
    }
  }
  s.true_len = rows;
  s.label = label;
  return s;
}

std::vector<MTSSample> load_split(const fs::path& dir, const std::string& split,
                                  std::size_t n_channels, std::size_t max_len,
                                  std::size_t n_classes) {
  const fs::path split_dir = dir / split;
  const fs::path labels_path = split_dir / "labels.csv";
  if (!fs::exists(labels_path)) {
    throw DataError("missing label index " + labels_path.string());
  }
  std::istringstream in(read_text_file(labels_path.string()));
  std::vector<MTSSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != 2) {
      throw DataError(labels_path.string() + ":" + std::to_string(line_no) +
                      ": expected 'filename,label'");
    }
    int label = 0;
    try {
      label = static_cast<int>(std::stol(fields[1]));
    } catch (const std::exception&) {
      throw DataError(labels_path.string() + ":" + std::to_string(line_no) + ": bad label '" +
                      fields[1] + "'");
    }
    samples.push_back(
        load_sample((split_dir / fields[0]).string(), n_channels, max_len, label, n_classes));
  }
  return samples;
}

}  // namespace

MTSDataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path meta_path = root / "meta.json";
  if (!fs::exists(meta_path)) {
    throw DataError("missing manifest " + meta_path.string());
  }
  json meta;
  try {
    meta = json::parse(read_text_file(meta_path.string()));
  } catch (const json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  MTSDataset ds;
  try {
    ds.name = meta.at("name").get<std::string>();
    ds.n_channels = meta.at("n_channels").get<std::size_t>();
    ds.n_classes = meta.at("n_classes").get<std::size_t>();
    ds.max_len = meta.at("max_len").get<std::size_t>();
    if (meta.contains("class_names")) {
      ds.class_names = meta["class_names"].get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (ds.n_channels == 0 || ds.n_classes == 0 || ds.max_len == 0) {
    throw DataError(meta_path.string() + ": n_channels, n_classes and max_len must be positive");
  }
  ds.train = load_split(root, "train", ds.n_channels, ds.max_len, ds.n_classes);
  ds.test = load_split(root, "test", ds.n_channels, ds.max_len, ds.n_classes);
  return ds;
}

void save_dataset(const MTSDataset& ds, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  json meta{{"name", ds.name},
            {"n_channels", ds.n_channels},
            {"n_classes", ds.n_classes},
            {"max_len", ds.max_len},
            {"splits", json::array({"train", "test"})}};
  if (!ds.class_names.empty()) meta["class_names"] = ds.class_names;
  write_text_file((root / "meta.json").string(), meta.dump(2) + "\n");

  for (int si = 0; si < 2; ++si) {
    const std::string split = kSplits[si];
    const std::vector<MTSSample>& samples = si == 0 ? ds.train : ds.test;
    const fs::path split_dir = root / split;
    fs::create_directories(split_dir);
    std::string labels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04zu.csv", split.c_str(), i);
      const MTSSample& s = samples[i];
      std::string body;
      for (std::size_t t = 0; t < s.true_len; ++t) {
        for (std::size_t c = 0; c < static_cast<std::size_t>(s.values.cols()); ++c) {
          if (c) body += ',';
          body += fmt_double(s.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)));
        }
        body += '\n';
      }
      write_text_file((split_dir / name).string(), body);
      labels += std::string(name) + "," + std::to_string(s.label) + "\n";
    }
    write_text_file((split_dir / "labels.csv").string(), labels);
  }
}

std::vector<Batch> batchify(const std::vector<MTSSample>& samples, std::size_t batch_size,
                            Rng& rng, bool shuffle) {
  if (batch_size == 0) throw std::invalid_argument("batchify: batch_size must be >= 1");
  if (samples.empty()) throw std::invalid_argument("batchify: empty sample list");

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    Batch batch;
    batch.padded_len = 0;
    for (std::size_t i = start; i < end; ++i) {
      batch.padded_len = std::max(batch.padded_len, samples[order[i]].true_len);
    }
    for (std::size_t i = start; i < end; ++i) {
      const MTSSample& src = samples[order[i]];
      MTSSample padded;
      padded.true_len = src.true_len;
      padded.label = src.label;
      padded.values = RowMat::Zero(static_cast<Eigen::Index>(batch.padded_len), src.values.cols());
      padded.values.topRows(static_cast<Eigen::Index>(src.true_len)) =
          src.values.topRows(static_cast<Eigen::Index>(src.true_len));
      batch.samples.push_back(std::move(padded));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

MTSDataset synth_dataset(const SynthSpec& spec, Rng& rng) {
  if (spec.n_classes == 0 || spec.n_channels == 0 || spec.len_min == 0 ||
      spec.len_min > spec.len_max) {
    throw std::invalid_argument("synth_dataset: invalid spec");
  }
  MTSDataset ds;
  ds.name = "synthetic";
  ds.n_channels = spec.n_channels;
  ds.n_classes = spec.n_classes;
  ds.max_len = spec.len_max;

  auto make_sample = [&](std::size_t k) {
    const std::size_t T =
        spec.len_min + static_cast<std::size_t>(rng.uniform_int(spec.len_max - spec.len_min + 1));
    MTSSample s;
    s.true_len = T;
    s.label = static_cast<int>(k);
    s.values.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(spec.n_channels));
    const double freq = 1.0 + static_cast<double>(k);          // cycles over max_len
    const double phase = std::numbers::pi * static_cast<double>(k);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < spec.n_channels; ++c) {
        const double angle = 2.0 * std::numbers::pi * freq * static_cast<double>(t) /
                                 static_cast<double>(spec.len_max) +
                             0.5 * static_cast<double>(c) + phase;
        const double offset = ((c + k) % 2 == 0) ? 0.4 : -0.4;
        s.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
            std::sin(angle) + offset + spec.noise * rng.normal();
      }
    }
    return s;
  };

  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    for (std::size_t i = 0; i < spec.train_per_class; ++i) ds.train.push_back(make_sample(k));
  }
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    for (std::size_t i = 0; i < spec.test_per_class; ++i) ds.test.push_back(make_sample(k));
  }
  return ds;
}

}  // namespace gtn
