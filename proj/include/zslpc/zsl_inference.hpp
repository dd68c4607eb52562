// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "zslpc/dataset_cache.hpp"
#include "zslpc/error.hpp"
#include "zslpc/semantic_embeddings.hpp"
#include "zslpc/split_manifest.hpp"
#include "zslpc/training.hpp"

namespace zslpc {

struct RankedClass {
  int index = 0;  // row of the unseen table
  double cosine = 0.0;
};

struct ZslPrediction {
  std::size_t record = 0;  // manifest record index
  Eigen::VectorXd seen_probabilities;
  std::vector<int> seen_labels;  // top T, descending probability
  Eigen::VectorXd embedding;     // z(x)
  double normalizer = 0.0;       // K
  std::vector<RankedClass> unseen_ranking;
  int T = 0;

  int predicted() const { return unseen_ranking.front().index; }
};

namespace detail {

inline void check_probabilities(const Eigen::VectorXd& y, int T) {
  if (T < 1 || T > y.size()) {
    throw UsageError("T=" + std::to_string(T) + " outside [1, " + std::to_string(y.size()) + "]");
  }
  if (std::abs(y.sum() - 1.0) > 1e-6) throw NumericError("seen probabilities do not sum to 1");
}

}  // namespace detail

// Ties break toward the lower class index.
inline std::vector<int> top_t_labels(const Eigen::VectorXd& y, int T) {
  detail::check_probabilities(y, T);
  std::vector<int> order(static_cast<std::size_t>(y.size()));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + T, order.end(), [&](int a, int b) {
    return y[a] > y[b] || (y[a] == y[b] && a < b);
  });
  order.resize(static_cast<std::size_t>(T));
  return order;
}

struct ConseEmbedding {
  Eigen::VectorXd z;
  double normalizer = 0.0;
  std::vector<int> labels;
};

/// z = (1/K) sum_t p(s_t|x) e_{s_t} with K = sqrt(sum_t p(s_t|x)^2).
inline ConseEmbedding conse_embedding(const Eigen::VectorXd& y, const SemanticEmbeddingTable& seen, int T) {
  if (y.size() != seen.size()) throw DataError("probability vector length differs from the seen table");
  ConseEmbedding out;
  out.labels = top_t_labels(y, T);
  out.z = Eigen::VectorXd::Zero(seen.dim());
  double sq = 0.0;
  for (const int s : out.labels) {
    out.z += y[s] * seen.embeddings.row(s).transpose();
    sq += y[s] * y[s];
  }
  out.normalizer = std::sqrt(sq);
  if (!(out.normalizer > 0.0)) throw NumericError("all top-T probabilities are zero");
  out.z /= out.normalizer;
  return out;
}

/// Unseen classes by descending cosine similarity to z (ties: lower index).
inline std::vector<RankedClass> nearest_unseen(const Eigen::VectorXd& z, const SemanticEmbeddingTable& unseen) {
  if (z.size() != unseen.dim()) throw DataError("embedding dimension does not match the unseen table");
  const double zn = z.norm();
  if (!(zn > 0.0)) throw NumericError("cannot rank against a zero embedding");
  std::vector<RankedClass> ranking(static_cast<std::size_t>(unseen.size()));
  for (Eigen::Index u = 0; u < unseen.size(); ++u) {
    const double en = unseen.embeddings.row(u).norm();
    if (!(en > 0.0)) throw NumericError("unseen class '" + unseen.class_names[u] + "' has a zero embedding");
    ranking[static_cast<std::size_t>(u)] = {static_cast<int>(u), unseen.embeddings.row(u).dot(z) / (en * zn)};
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const RankedClass& a, const RankedClass& b) { return a.cosine > b.cosine; });
  return ranking;
}

inline ZslPrediction predict_unseen(const Eigen::VectorXd& y, const SemanticEmbeddingTable& seen,
                                    const SemanticEmbeddingTable& unseen, int T) {
  ZslPrediction p;
  auto c = conse_embedding(y, seen, T);
  p.seen_probabilities = y;
  p.seen_labels = std::move(c.labels);
  p.embedding = std::move(c.z);
  p.normalizer = c.normalizer;
  p.unseen_ranking = nearest_unseen(p.embedding, unseen);
  p.T = T;
  return p;
}

/// Seen probabilities for every test-unseen record, one column each. The
/// semantic head requires the seen table to match the checkpoint checksum.
inline Eigen::MatrixXd unseen_seen_probabilities(const DatasetCache& cache, const SplitManifest& manifest,
                                                 const Checkpoint& ck, const SemanticEmbeddingTable& seen,
                                                 std::vector<std::size_t>* records) {
  check_cache_matches(cache, manifest);
  if (ck.seen_classes != manifest.seen_classes) throw DataError("checkpoint seen classes differ from the manifest");
  if (seen.class_names != manifest.seen_classes) throw DataError("seen table rows differ from the manifest");
  auto idx = records_with_role(manifest, SampleRole::test_unseen);
  if (idx.empty()) throw DataError("the manifest has no test-unseen records");
  auto probs = seen_probabilities(ck, cache, idx, ck.encoder.head == HeadKind::semantic ? &seen : nullptr);
  if (records) *records = std::move(idx);
  return probs;
}

inline std::vector<ZslPrediction> predict_from_probabilities(const Eigen::MatrixXd& probs,
                                                             const std::vector<std::size_t>& records,
                                                             const SemanticEmbeddingTable& seen,
                                                             const SemanticEmbeddingTable& unseen, int T) {
  std::vector<ZslPrediction> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.push_back(predict_unseen(probs.col(static_cast<Eigen::Index>(i)), seen, unseen, T));
    out.back().record = records[i];
  }
  return out;
}

/// Zero-shot prediction for every test-unseen record. With the basic head
/// the seen probabilities come from the classifier and `seen` only supplies e_s.
inline std::vector<ZslPrediction> classify_unseen_batch(const DatasetCache& cache, const SplitManifest& manifest,
                                                        const Checkpoint& ck, const SemanticEmbeddingTable& seen,
                                                        const SemanticEmbeddingTable& unseen, int T) {
  if (unseen.class_names != manifest.unseen_classes) throw DataError("unseen table rows differ from the manifest");
  std::vector<std::size_t> records;
  const auto probs = unseen_seen_probabilities(cache, manifest, ck, seen, &records);
  return predict_from_probabilities(probs, records, seen, unseen, T);
}

inline void write_predictions_csv(std::ostream& out, const std::vector<ZslPrediction>& predictions,
                                  const SplitManifest& manifest, const nlohmann::json& config = nullptr) {
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "sample_id,true_class,predicted_class,top_cosine,K,T\n";
  for (const auto& p : predictions) {
    const auto& r = manifest.records.at(p.record);
    out << fmt::format("{},{},{},{:.9f},{:.9f},{}\n", r.path, r.class_name,
                       manifest.unseen_classes.at(static_cast<std::size_t>(p.predicted())),
                       p.unseen_ranking.front().cosine, p.normalizer, p.T);
  }
}

}  // namespace zslpc
