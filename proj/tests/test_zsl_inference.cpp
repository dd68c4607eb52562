// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "toy_data.hpp"
#include "zslpc/training.hpp"
#include "zslpc/zsl_inference.hpp"

namespace zslpc {
namespace {

Eigen::VectorXd probs(std::initializer_list<double> v) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), y.data());
  return y;
}

Eigen::VectorXd random_simplex(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = uniform(rng, 0.01, 1.0);
  return y / y.sum();
}

SemanticEmbeddingTable table_of(std::vector<std::string> names, Eigen::MatrixXd rows) {
  SemanticEmbeddingTable t;
  t.class_names = std::move(names);
  t.embeddings = std::move(rows);
  return t;
}

TEST(TopTLabels, HandExamples) {
  EXPECT_EQ(top_t_labels(probs({0.2, 0.5, 0.3}), 1), std::vector<int>{1});
  EXPECT_EQ(top_t_labels(probs({0.2, 0.5, 0.3}), 3), (std::vector<int>{1, 2, 0}));
  EXPECT_EQ(top_t_labels(probs({0.25, 0.25, 0.5}), 2), (std::vector<int>{2, 0}));
}

TEST(TopTLabels, MatchesFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto y = random_simplex(30, seed);
    std::vector<int> all(30);
    std::iota(all.begin(), all.end(), 0);
    std::stable_sort(all.begin(), all.end(), [&](int a, int b) { return y[a] > y[b]; });
    for (int T : {1, 5, 17, 30}) {
      EXPECT_EQ(top_t_labels(y, T), std::vector<int>(all.begin(), all.begin() + T));
    }
  }
}

TEST(TopTLabels, RejectsBadInputs) {
  EXPECT_THROW(top_t_labels(probs({0.5, 0.5}), 0), UsageError);
  EXPECT_THROW(top_t_labels(probs({0.5, 0.5}), 3), UsageError);
  EXPECT_THROW(top_t_labels(probs({0.5, 0.6}), 1), NumericError);
}

TEST(ConseEmbedding, SingleLabelReturnsItsEmbedding) {
  const auto seen = testing::random_table({"a", "b", "c"}, 5, 1);
  const auto c = conse_embedding(probs({0.1, 0.7, 0.2}), seen, 1);
  EXPECT_NEAR(c.normalizer, 0.7, 1e-15);
  EXPECT_LE((c.z - seen.embeddings.row(1).transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ConseEmbedding, TwoLabelHandValue) {
  const auto seen = table_of({"a", "b", "c"}, Eigen::MatrixXd::Identity(3, 2));
  const auto c = conse_embedding(probs({0.6, 0.4, 0.0}), seen, 2);
  EXPECT_NEAR(c.normalizer, std::sqrt(0.52), 1e-15);
  EXPECT_NEAR(c.z[0], 0.8321, 1e-4);
  EXPECT_NEAR(c.z[1], 0.5547, 1e-4);
  EXPECT_NEAR(c.z.norm(), 1.0, 1e-12);  // orthonormal rows
}

TEST(ConseEmbedding, MatchesDirectSumOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto seen = testing::random_table(testing::class_names(30), 300, seed);
    const auto y = random_simplex(30, seed + 100);
    for (int T : {1, 7, 30}) {
      const auto c = conse_embedding(y, seen, T);
      std::vector<int> order(30);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return y[a] > y[b]; });
      Eigen::VectorXd z = Eigen::VectorXd::Zero(300);
      double k2 = 0.0;
      for (int t = 0; t < T; ++t) {
        z += y[order[t]] * seen.embeddings.row(order[t]).transpose();
        k2 += y[order[t]] * y[order[t]];
      }
      z /= std::sqrt(k2);
      EXPECT_LE((c.z - z).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ConseEmbedding, DirectionIgnoresProbabilityScale) {
  const auto seen = testing::random_table(testing::class_names(5), 12, 2);
  const auto y = random_simplex(5, 3);
  const auto a = conse_embedding(y, seen, 3);
  // Same top-3 mass split, different overall scale: only through K.
  Eigen::VectorXd y2 = y;
  const auto top = top_t_labels(y, 3);
  double moved = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    if (std::find(top.begin(), top.end(), static_cast<int>(i)) == top.end()) {
      moved += y2[i] * 0.5;
      y2[i] *= 0.5;
    }
  }
  double top_mass = 0.0;
  for (int s : top) top_mass += y[s];
  for (int s : top) y2[s] += moved * y[s] / top_mass;
  const auto b = conse_embedding(y2, seen, 3);
  EXPECT_LE((a.z / a.z.norm() - b.z / b.z.norm()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ConseEmbedding, RejectsMismatchedTableAndKeepsNormalizerPositive) {
  const auto seen = testing::random_table({"a", "b"}, 4, 1);
  EXPECT_THROW(conse_embedding(probs({0.2, 0.3, 0.5}), seen, 1), DataError);
  // K >= max_s y_s >= 1/S for any probability vector.
  EXPECT_NEAR(conse_embedding(probs({0.5, 0.5}), seen, 1).normalizer, 0.5, 1e-15);
  EXPECT_NEAR(conse_embedding(probs({1.0, 0.0}), seen, 2).normalizer, 1.0, 1e-15);
}

TEST(NearestUnseen, MatchesCosineOracle) {
  const auto unseen = testing::random_table(testing::class_names(14, "u"), 300, 7);
  Rng rng(8);
  Eigen::VectorXd z(300);
  for (Eigen::Index i = 0; i < 300; ++i) z[i] = uniform(rng, -1.0, 1.0);
  const auto r = nearest_unseen(z, unseen);
  ASSERT_EQ(r.size(), 14u);
  for (const auto& c : r) {
    const double cos = unseen.embeddings.row(c.index).dot(z) / (unseen.embeddings.row(c.index).norm() * z.norm());
    EXPECT_NEAR(c.cosine, cos, 1e-12);
  }
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GE(r[i - 1].cosine, r[i].cosine);
  const auto scaled = nearest_unseen(10.0 * z, unseen);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(scaled[i].index, r[i].index);
}

TEST(NearestUnseen, SelfMatchAndTies) {
  const auto unseen = table_of({"x", "y", "z"}, (Eigen::MatrixXd(3, 2) << 1, 0, 0, 1, 1, 0).finished());
  const auto r = nearest_unseen(Eigen::Vector2d(3, 0), unseen);
  EXPECT_EQ(r[0].index, 0);
  EXPECT_EQ(r[1].index, 2);
  EXPECT_NEAR(r[0].cosine, 1.0, 1e-15);
  EXPECT_THROW(nearest_unseen(Eigen::Vector2d::Zero(), unseen), NumericError);
  EXPECT_THROW(nearest_unseen(Eigen::Vector3d(1, 0, 0), unseen), DataError);
}

TEST(PredictUnseen, CombinesTheThreeSteps) {
  const auto seen = testing::random_table(testing::class_names(4, "s"), 6, 1);
  const auto unseen = testing::random_table(testing::class_names(3, "u"), 6, 2);
  const auto y = random_simplex(4, 9);
  const auto p = predict_unseen(y, seen, unseen, 2);
  const auto c = conse_embedding(y, seen, 2);
  EXPECT_EQ(p.seen_labels, c.labels);
  EXPECT_EQ(p.normalizer, c.normalizer);
  EXPECT_EQ(p.predicted(), nearest_unseen(c.z, unseen).front().index);
  EXPECT_EQ(p.T, 2);
}

TEST(ClassifyUnseenBatch, DeterministicOverToyData) {
  const auto toy = testing::make_toy(3, 32);
  TrainConfig train;
  train.epochs = 1;
  train.batch_size = 4;
  train.semantics = SemanticMode::basic;
  const auto ck = train_model(toy.cache, toy.manifest, train, testing::toy_encoder(), nullptr);
  const auto seen = testing::random_table(toy.manifest.seen_classes, 300, 1);
  const auto unseen = testing::random_table(toy.manifest.unseen_classes, 300, 2);
  const auto a = classify_unseen_batch(toy.cache, toy.manifest, ck, seen, unseen, 2);
  const auto b = classify_unseen_batch(toy.cache, toy.manifest, ck, seen, unseen, 2);
  ASSERT_EQ(a.size(), toy.manifest.count(SampleRole::test_unseen));
  std::ostringstream sa, sb;
  write_predictions_csv(sa, a, toy.manifest, {{"T", 2}});
  write_predictions_csv(sb, b, toy.manifest, {{"T", 2}});
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_TRUE(sa.str().starts_with("# config: {\"T\":2}\nsample_id,true_class,predicted_class,top_cosine,K,T\n"));
  for (const auto& p : a) EXPECT_EQ(toy.manifest.records[p.record].role, SampleRole::test_unseen);
  auto reordered = unseen;
  std::swap(reordered.class_names[0], reordered.class_names[1]);
  EXPECT_THROW(classify_unseen_batch(toy.cache, toy.manifest, ck, seen, reordered, 2), DataError);
  EXPECT_THROW(classify_unseen_batch(toy.cache, toy.manifest, ck, seen, unseen, 3), UsageError);
}

TEST(WritePredictionsCsv, FormatsOneLinePerSample) {
  SplitManifest m;
  m.unseen_classes = {"cone", "ring"};
  m.records = {{"a/0.off", "ring", SampleRole::test_unseen}};
  ZslPrediction p;
  p.record = 0;
  p.normalizer = 0.5;
  p.T = 3;
  p.unseen_ranking = {{1, 0.25}, {0, -0.5}};
  std::ostringstream out;
  write_predictions_csv(out, {p}, m);
  EXPECT_EQ(out.str(), "sample_id,true_class,predicted_class,top_cosine,K,T\na/0.off,ring,ring,0.250000000,0.500000000,3\n");
}

}  // namespace
}  // namespace zslpc
