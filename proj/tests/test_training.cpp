// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>

#include "support.hpp"
#include "toy_data.hpp"
#include "zslpc/training.hpp"

namespace zslpc {
namespace {

using testing::make_toy;
using testing::toy_encoder;

ParameterSet<double> scalar_params(double weight, double bias) {
  ParameterSet<double> p;
  p.head = HeadKind::basic;
  p.head_layers.push_back({Mat<double>::Constant(1, 1, weight), Mat<double>::Constant(1, 1, bias)});
  return p;
}

bool same_params(const ParameterSet<float>& a, const ParameterSet<float>& b) {
  std::vector<const Mat<float>*> bv;
  b.visit([&](const std::string&, const Mat<float>& m, bool) { bv.push_back(&m); });
  std::size_t i = 0;
  bool same = true;
  a.visit([&](const std::string&, const Mat<float>& m, bool) {
    const auto& o = *bv[i++];
    same = same && m.rows() == o.rows() && m.cols() == o.cols() &&
           std::memcmp(m.data(), o.data(), sizeof(float) * static_cast<std::size_t>(m.size())) == 0;
  });
  return same && i == bv.size();
}

TrainConfig toy_train(int epochs, SemanticMode mode = SemanticMode::basic) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.learning_rate = 1e-2;
  t.semantics = mode;
  t.seed = 3;
  return t;
}

TEST(TrainConfig, StepDecaySchedule) {
  const TrainConfig t;
  EXPECT_DOUBLE_EQ(t.learning_rate_at(0), 1e-3);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(19), 1e-3);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(20), 1e-3 * 0.7);
  EXPECT_NEAR(t.learning_rate_at(199), 1e-3 * std::pow(0.7, 9), 1e-18);
  EXPECT_EQ(t.batch_size, 16);
  EXPECT_EQ(t.epochs, 200);
  auto bad = t;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), UsageError);
  EXPECT_EQ(train_config_from_json(to_json(t)).learning_rate, t.learning_rate);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = scalar_params(1.0, 1.0);
  auto g = scalar_params(0.5, 0.0);
  auto state = AdamState<double>::fresh(p);
  adam_step(p, g, state, 1e-3);
  EXPECT_NEAR(p.head_layers[0].weight(0, 0), 0.999, 1e-9);
  EXPECT_EQ(p.head_layers[0].bias(0, 0), 1.0);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = scalar_params(0.25, -2.0);
  const auto g = p.zeros_like();
  auto state = AdamState<double>::fresh(p);
  for (int i = 0; i < 5; ++i) adam_step(p, g, state, 1e-2);
  EXPECT_EQ(p.head_layers[0].weight(0, 0), 0.25);
  EXPECT_EQ(p.head_layers[0].bias(0, 0), -2.0);
}

TEST(Adam, RejectsMismatchedStructure) {
  auto p = scalar_params(1.0, 1.0);
  auto g = scalar_params(1.0, 1.0);
  g.head_layers[0].weight = Mat<double>::Zero(2, 1);
  auto state = AdamState<double>::fresh(p);
  EXPECT_THROW(adam_step(p, g, state, 1e-3), UsageError);
}

TEST(RunningStatistics, ExponentialAverageWithMomentum) {
  auto c = testing::tiny_config(EncoderVariant::pointnet, Pooling::max, HeadKind::basic);
  auto params = init_parameters<double>(c, 1);
  const auto cloud = testing::random_cloud(8, 2);
  ForwardTrace<double> trace;
  PointSetNetwork<double>(c, params).forward(make_batch<double>(cloud), Mode::train, nullptr, &trace);
  const Mat<double> before = params.point_layers[0].running_mean;
  update_running_statistics(params, trace, 0.9);
  const Mat<double> want = 0.9 * before + 0.1 * trace.point_caches[0].batch_mean;
  EXPECT_LE((params.point_layers[0].running_mean - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TrainModel, ToyProblemConverges) {
  const auto toy = make_toy(10, 64);
  std::vector<double> losses;
  const auto ck = train_model(toy.cache, toy.manifest, toy_train(50), toy_encoder(), nullptr,
                              [&](const EpochStats& s) { losses.push_back(s.mean_loss); });
  ASSERT_EQ(losses.size(), 50u);
  EXPECT_EQ(ck.loss_series, losses);
  EXPECT_LT(ck.final_loss, 0.1);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_GE(seen_top1(ck, toy.cache, toy.manifest, nullptr, SampleRole::test_seen), 90.0);
}

TEST(TrainModel, IdenticalRunsAreBitwiseEqual) {
  const auto toy = make_toy(4, 32);
  auto train = toy_train(3);
  train.augment_rotation = true;
  const auto a = train_model(toy.cache, toy.manifest, train, toy_encoder(), nullptr);
  const auto b = train_model(toy.cache, toy.manifest, train, toy_encoder(), nullptr);
  EXPECT_EQ(a.loss_series, b.loss_series);
  EXPECT_TRUE(same_params(a.params, b.params));
  train.seed = 4;
  EXPECT_FALSE(same_params(a.params, train_model(toy.cache, toy.manifest, train, toy_encoder(), nullptr).params));
}

TEST(TrainModel, SemanticHeadTrainsAgainstFrozenTable) {
  const auto toy = make_toy(4, 32);
  const auto table = testing::random_table(toy.manifest.seen_classes, kWordVectorDim, 5);
  const auto before = table.embeddings;
  const auto ck = train_model(toy.cache, toy.manifest, toy_train(2, SemanticMode::w2v), toy_encoder(), &table);
  EXPECT_EQ(ck.encoder.head, HeadKind::semantic);
  EXPECT_EQ(ck.table_checksum, table_checksum(table));
  EXPECT_EQ(table.embeddings, before);
  auto other = testing::random_table(toy.manifest.seen_classes, kWordVectorDim, 6, SemanticMode::glove);
  EXPECT_THROW(seen_top1(ck, toy.cache, toy.manifest, &other), DataError);
}

TEST(TrainModel, RejectsBadInputs) {
  auto toy = make_toy(2, 16);
  EXPECT_THROW(train_model(toy.cache, toy.manifest, toy_train(1, SemanticMode::w2v), toy_encoder(), nullptr),
               UsageError);
  auto swapped = testing::random_table({"rod", "slab"}, kWordVectorDim, 5);
  EXPECT_THROW(train_model(toy.cache, toy.manifest, toy_train(1, SemanticMode::w2v), toy_encoder(), &swapped),
               DataError);
  auto no_train = toy;
  for (auto& r : no_train.manifest.records) {
    if (r.role == SampleRole::train_seen) r.role = SampleRole::test_seen;
  }
  EXPECT_THROW(train_model(no_train.cache, no_train.manifest, toy_train(1), toy_encoder(), nullptr), DataError);
  auto short_cache = toy;
  short_cache.cache.samples.pop_back();
  EXPECT_THROW(train_model(short_cache.cache, short_cache.manifest, toy_train(1), toy_encoder(), nullptr), DataError);
}

TEST(Checkpoint, RoundTripIsBitExactAndInferenceIdentical) {
  const auto toy = make_toy(3, 32);
  auto ck = train_model(toy.cache, toy.manifest, toy_train(2), toy_encoder(), nullptr);
  ck.run_config = {{"seed", 3}};
  const auto dir = testing::scratch_dir("checkpoint");
  save_checkpoint(ck, dir / "m.zck");
  const auto back = load_checkpoint(dir / "m.zck");
  EXPECT_TRUE(same_params(ck.params, back.params));
  EXPECT_EQ(back.seen_classes, ck.seen_classes);
  EXPECT_EQ(back.loss_series, ck.loss_series);
  EXPECT_EQ(back.run_config, ck.run_config);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  const auto idx = records_with_role(toy.manifest, SampleRole::test_unseen);
  const Mat<double> pa = seen_probabilities(ck, toy.cache, idx, nullptr);
  const Mat<double> pb = seen_probabilities(back, toy.cache, idx, nullptr);
  EXPECT_EQ(std::memcmp(pa.data(), pb.data(), sizeof(double) * static_cast<std::size_t>(pa.size())), 0);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto toy = make_toy(2, 16);
  const auto bytes = encode_checkpoint(train_model(toy.cache, toy.manifest, toy_train(1), toy_encoder(), nullptr));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), DataError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), DataError);
  EXPECT_THROW(load_checkpoint(testing::scratch_dir("checkpoint_missing") / "none.zck"), DataError);
}

TEST(SeenProbabilities, ChunkingDoesNotChangeResults) {
  const auto toy = make_toy(3, 32);
  const auto ck = train_model(toy.cache, toy.manifest, toy_train(1), toy_encoder(), nullptr);
  const auto idx = records_with_role(toy.manifest, SampleRole::test_seen);
  const Mat<double> a = seen_probabilities(ck, toy.cache, idx, nullptr, 1);
  const Mat<double> b = seen_probabilities(ck, toy.cache, idx, nullptr, 16);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((a.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_THROW(seen_top1(ck, toy.cache, toy.manifest, nullptr, SampleRole::test_unseen), UsageError);
}

}  // namespace
}  // namespace zslpc
