// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zslpc/dataset_cache.hpp"
#include "zslpc/encoder.hpp"
#include "zslpc/error.hpp"
#include "zslpc/rng.hpp"
#include "zslpc/semantic_embeddings.hpp"
#include "zslpc/split_manifest.hpp"

namespace zslpc {

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 0.7;
  int lr_decay_every = 20;
  int batch_size = 16;
  int epochs = 200;
  std::uint64_t seed = 0;
  SemanticMode semantics = SemanticMode::w2v;
  bool augment_rotation = false;  // random rotation about the z (up) axis

  void validate() const {
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (lr_decay_every < 1) throw UsageError("lr decay interval must be >= 1");
  }

  double learning_rate_at(int epoch) const {
    return learning_rate * std::pow(lr_decay, static_cast<double>(epoch / lr_decay_every));
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"lr_decay", c.lr_decay},     {"lr_decay_every", c.lr_decay_every},
          {"batch_size", c.batch_size},       {"epochs", c.epochs},         {"seed", c.seed},
          {"semantics", to_string(c.semantics)}, {"augment_rotation", c.augment_rotation}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.lr_decay_every = j.at("lr_decay_every").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.semantics = semantic_mode_from_string(j.at("semantics").get<std::string>());
  c.augment_rotation = j.at("augment_rotation").get<bool>();
  return c;
}

// ---------------------------------------------------------------- Adam

template <typename S>
struct AdamState {
  ParameterSet<S> first_moment;
  ParameterSet<S> second_moment;
  std::int64_t step = 0;

  static AdamState fresh(const ParameterSet<S>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every trainable tensor. `step` is
/// advanced before use, so the first call applies step 1.
template <typename S>
void adam_step(ParameterSet<S>& params, const ParameterSet<S>& gradients, AdamState<S>& state, double lr,
               const AdamHyper& hyper = {}) {
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  std::vector<Mat<S>*> p, m, v;
  std::vector<const Mat<S>*> g;
  std::vector<std::string> names;
  params.visit([&](const std::string& n, Mat<S>& x, bool t) {
    if (t) {
      p.push_back(&x);
      names.push_back(n);
    }
  });
  gradients.visit([&](const std::string&, const Mat<S>& x, bool t) {
    if (t) g.push_back(&x);
  });
  state.first_moment.visit([&](const std::string&, Mat<S>& x, bool t) {
    if (t) m.push_back(&x);
  });
  state.second_moment.visit([&](const std::string&, Mat<S>& x, bool t) {
    if (t) v.push_back(&x);
  });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw UsageError("Adam: gradient/state structure does not match the parameters");
  }
  const S b1 = static_cast<S>(hyper.beta1), b2 = static_cast<S>(hyper.beta2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i]->rows() != p[i]->rows() || g[i]->cols() != p[i]->cols()) {
      throw UsageError("Adam: shape mismatch for " + names[i]);
    }
    *m[i] = b1 * *m[i] + (S(1) - b1) * *g[i];
    *v[i] = b2 * *v[i] + (S(1) - b2) * g[i]->cwiseProduct(*g[i]);
    const auto m_hat = m[i]->array() / static_cast<S>(c1);
    const auto v_hat = v[i]->array() / static_cast<S>(c2);
    Mat<S> update = static_cast<S>(lr) * m_hat / (v_hat.sqrt() + static_cast<S>(hyper.epsilon));
    if (!update.allFinite()) throw NumericError("non-finite Adam update for " + names[i]);
    *p[i] -= update;
  }
}

/// running = momentum * running + (1 - momentum) * batch statistic.
template <typename S>
void update_running_statistics(ParameterSet<S>& params, const ForwardTrace<S>& trace, double momentum) {
  const S mo = static_cast<S>(momentum);
  auto apply = [&](std::vector<nn::SharedLayerParams<S>>& layers, const std::vector<nn::SharedLayerCache<S>>& caches) {
    for (std::size_t i = 0; i < layers.size() && i < caches.size(); ++i) {
      if (!layers[i].has_batch_norm()) continue;
      layers[i].running_mean.col(0) = mo * layers[i].running_mean.col(0) + (S(1) - mo) * caches[i].batch_mean;
      layers[i].running_var.col(0) = mo * layers[i].running_var.col(0) + (S(1) - mo) * caches[i].batch_var;
    }
  };
  apply(params.point_layers, trace.point_caches);
  apply(params.edge_layers, trace.edge_caches);
  apply(params.fuse_layers, trace.fuse_caches);
  apply(params.prepool_layers, trace.prepool_caches);
}

// ---------------------------------------------------------------- checkpoints

struct Checkpoint {
  EncoderConfig encoder;
  TrainConfig train;
  ParameterSet<float> params;
  std::vector<std::string> seen_classes;
  std::string table_checksum;  // empty for the basic head
  int epoch = 0;
  double final_loss = 0.0;
  std::vector<double> loss_series;
  nlohmann::json run_config;
};

inline constexpr char kCheckpointMagic[4] = {'Z', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// "ZCK1" | u32 version | u32 header length | JSON header |
// u32 tensor count | per tensor: u32 name length, name, u32 rows, u32 cols, f32 data (column-major)
inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header = {{"encoder", to_json(ck.encoder)},
                           {"train", to_json(ck.train)},
                           {"seen_classes", ck.seen_classes},
                           {"table_checksum", ck.table_checksum},
                           {"epoch", ck.epoch},
                           {"final_loss", ck.final_loss},
                           {"loss_series", ck.loss_series},
                           {"run_config", ck.run_config}};
  const auto text = header.dump();
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  std::uint32_t count = 0;
  ck.params.visit([&](const std::string&, const Mat<float>&, bool) { ++count; });
  detail::put_u32(out, count);
  ck.params.visit([&](const std::string& name, const Mat<float>& m, bool) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_u32(out, std::bit_cast<std::uint32_t>(m.data()[i]));
  });
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  detail::ByteReader in(bytes, what);
  if (std::memcmp(in.take(4, "header"), kCheckpointMagic, 4) != 0) throw DataError(what + ": bad magic");
  const auto version = in.u32("header");
  if (version != kCheckpointVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  const auto len = in.u32("header");
  const auto* text = in.take(len, "header");
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(text), len));
    ck.encoder = encoder_config_from_json(header.at("encoder"));
    ck.train = train_config_from_json(header.at("train"));
    ck.seen_classes = header.at("seen_classes").get<std::vector<std::string>>();
    ck.table_checksum = header.at("table_checksum").get<std::string>();
    ck.epoch = header.at("epoch").get<int>();
    ck.final_loss = header.at("final_loss").get<double>();
    ck.loss_series = header.at("loss_series").get<std::vector<double>>();
    ck.run_config = header.at("run_config");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": malformed header: " + e.what());
  }
  ck.params = init_parameters<float>(ck.encoder, 0);
  const auto count = in.u32("tensor table");
  std::uint32_t expected = 0;
  ck.params.visit([&](const std::string&, const Mat<float>&, bool) { ++expected; });
  if (count != expected) throw DataError(what + ": tensor count does not match the encoder configuration");
  ck.params.visit([&](const std::string& name, Mat<float>& m, bool) {
    const auto name_len = in.u32("tensor " + name);
    const std::string stored(reinterpret_cast<const char*>(in.take(name_len, "tensor " + name)), name_len);
    if (stored != name) throw DataError(what + ": expected tensor " + name + ", found " + stored);
    const auto rows = in.u32("tensor " + name);
    const auto cols = in.u32("tensor " + name);
    if (rows != m.rows() || cols != m.cols()) throw DataError(what + ": shape mismatch for " + name);
    const auto* p = in.take(4 * static_cast<std::size_t>(m.size()), "tensor " + name);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<float>(detail::get_u32(p + 4 * i));
  });
  if (in.remaining() != 0) throw DataError(what + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto bytes = encode_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

// ---------------------------------------------------------------- training

/// Encoder hyperparameters with the head chosen by the semantic mode.
inline EncoderConfig encoder_for(EncoderConfig base, SemanticMode mode, int num_classes) {
  base.num_classes = num_classes;
  base.head = mode == SemanticMode::basic ? HeadKind::basic : HeadKind::semantic;
  if (mode == SemanticMode::conc) {
    base.embedding_dim = 2 * kWordVectorDim;
  } else if (mode != SemanticMode::basic) {
    base.embedding_dim = kWordVectorDim;
  }
  return base;
}

inline std::vector<std::size_t> records_with_role(const SplitManifest& manifest, SampleRole role) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (manifest.records[i].role == role) out.push_back(i);
  }
  return out;
}

inline void check_cache_matches(const DatasetCache& cache, const SplitManifest& manifest) {
  if (cache.samples.size() != manifest.records.size()) {
    throw DataError("cache holds " + std::to_string(cache.samples.size()) + " samples, manifest lists " +
                    std::to_string(manifest.records.size()));
  }
  if (cache.class_table != manifest.class_table()) throw DataError("cache class table differs from the manifest");
}

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // percent, from training-mode forward passes
  double learning_rate = 0.0;
};

inline PointCloud rotate_about_up_axis(const PointCloud& cloud, double angle) {
  PointCloud out = cloud;
  const float c = static_cast<float>(std::cos(angle)), s = static_cast<float>(std::sin(angle));
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const float x = cloud.points(0, i), y = cloud.points(1, i);
    out.points(0, i) = c * x - s * y;
    out.points(1, i) = s * x + c * y;
  }
  return out;
}

/// Minimizes the seen-class cross-entropy with Adam over the train-seen
/// records. The semantic table (seen classes x d) is frozen. `on_epoch` sees
/// every epoch's statistics (the CLI appends them to the CSV loss log).
inline Checkpoint train_model(const DatasetCache& cache, const SplitManifest& manifest, const TrainConfig& train,
                              const EncoderConfig& encoder_base, const SemanticEmbeddingTable* seen_table,
                              const std::function<void(const EpochStats&)>& on_epoch = {}) {
  train.validate();
  check_cache_matches(cache, manifest);
  const auto train_idx = records_with_role(manifest, SampleRole::train_seen);
  if (train_idx.empty()) throw DataError("the manifest has no train-seen records");
  const int num_seen = static_cast<int>(manifest.seen_classes.size());
  const EncoderConfig encoder = encoder_for(encoder_base, train.semantics, num_seen);

  Mat<float> table;
  Checkpoint ck;
  if (train.semantics != SemanticMode::basic) {
    if (!seen_table) throw UsageError("semantic mode " + std::string(to_string(train.semantics)) + " needs a table");
    if (seen_table->mode != train.semantics) throw DataError("embedding table mode differs from the training mode");
    if (seen_table->class_names != manifest.seen_classes) {
      throw DataError("embedding table rows are not in the manifest's seen-class order");
    }
    if (seen_table->dim() != encoder.embedding_dim) throw DataError("embedding table dimension mismatch");
    table = seen_table->embeddings.cast<float>();
    ck.table_checksum = table_checksum(*seen_table);
  }
  const Mat<float>* table_ptr = train.semantics == SemanticMode::basic ? nullptr : &table;

  ck.encoder = encoder;
  ck.train = train;
  ck.seen_classes = manifest.seen_classes;
  ck.params = init_parameters<float>(encoder, train.seed);
  auto adam = AdamState<float>::fresh(ck.params);

  std::vector<std::size_t> order = train_idx;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    Rng rng(derive_seed(train.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    const double lr = train.learning_rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch_size), ++batch_no) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
      std::vector<PointCloud> rotated;
      std::vector<const PointCloud*> clouds;
      std::vector<int> labels;
      if (train.augment_rotation) rotated.reserve(end - start);
      for (auto i = start; i < end; ++i) {
        const auto& s = cache.samples[order[i]];
        if (train.augment_rotation) {
          rotated.push_back(rotate_about_up_axis(s.cloud, uniform(rng, 0.0, 2.0 * std::numbers::pi)));
          clouds.push_back(&rotated.back());
        } else {
          clouds.push_back(&s.cloud);
        }
        labels.push_back(static_cast<int>(s.class_index));
      }
      const auto batch = make_batch<float>(clouds);
      LossAndGradients<float> lg;
      try {
        lg = loss_and_gradients<float>(batch, labels, encoder, ck.params, table_ptr, Mode::train);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no) + ": " + e.what());
      }
      if (!std::isfinite(lg.loss)) {
        throw NumericError("loss diverged at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no));
      }
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(labels.size());
      for (Eigen::Index c = 0; c < lg.trace.logits.cols(); ++c) {
        Eigen::Index arg = 0;
        lg.trace.logits.col(c).maxCoeff(&arg);
        if (arg == labels[static_cast<std::size_t>(c)]) ++correct;
      }
      adam_step(ck.params, lg.gradients, adam, lr);
      update_running_statistics(ck.params, lg.trace, encoder.bn_momentum);
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(order.size()),
                     100.0 * static_cast<double>(correct) / static_cast<double>(order.size()), lr};
    ck.loss_series.push_back(stats.mean_loss);
    ck.epoch = epoch;
    ck.final_loss = stats.mean_loss;
    if (on_epoch) on_epoch(stats);
  }
  return ck;
}

/// Seen-class probabilities for a set of cache records in inference mode,
/// one column per record (evaluated in chunks of `chunk` samples).
inline Mat<double> seen_probabilities(const Checkpoint& ck, const DatasetCache& cache,
                                      const std::vector<std::size_t>& indices, const SemanticEmbeddingTable* seen_table,
                                      std::size_t chunk = 16) {
  Mat<float> table;
  const Mat<float>* table_ptr = nullptr;
  if (ck.encoder.head == HeadKind::semantic) {
    if (!seen_table) throw UsageError("the semantic head needs the seen embedding table");
    if (table_checksum(*seen_table) != ck.table_checksum) {
      throw DataError("seen embedding table checksum does not match the checkpoint");
    }
    table = seen_table->embeddings.cast<float>();
    table_ptr = &table;
  }
  PointSetNetwork<float> net(ck.encoder, ck.params);
  Mat<double> probs(ck.encoder.num_classes, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const auto end = std::min(indices.size(), start + chunk);
    std::vector<const PointCloud*> clouds;
    for (auto i = start; i < end; ++i) clouds.push_back(&cache.samples[indices[i]].cloud);
    const Mat<float> logits = net.forward(make_batch<float>(clouds), Mode::eval, table_ptr, nullptr);
    probs.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        nn::softmax_columns<double>(logits.cast<double>());
  }
  return probs;
}

/// Top-1 accuracy (percent) on the records with `role`, over seen classes.
inline double seen_top1(const Checkpoint& ck, const DatasetCache& cache, const SplitManifest& manifest,
                        const SemanticEmbeddingTable* seen_table, SampleRole role = SampleRole::test_seen) {
  check_cache_matches(cache, manifest);
  if (ck.seen_classes != manifest.seen_classes) throw DataError("checkpoint seen classes differ from the manifest");
  const auto idx = records_with_role(manifest, role);
  if (idx.empty()) throw DataError("the manifest has no " + std::string(to_string(role)) + " records");
  if (role == SampleRole::test_unseen) throw UsageError("seen accuracy is undefined for unseen records");
  const auto probs = seen_probabilities(ck, cache, idx, seen_table);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    Eigen::Index arg = 0;
    probs.col(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
    if (arg == static_cast<Eigen::Index>(cache.samples[idx[i]].class_index)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace zslpc
