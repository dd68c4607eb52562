// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "gradient_check.hpp"
#include "support.hpp"
#include "zslpc/encoder.hpp"

namespace zslpc {

// Readable parameter values in test listings.
inline void PrintTo(EncoderVariant v, std::ostream* os) { *os << to_string(v); }
inline void PrintTo(Pooling p, std::ostream* os) { *os << to_string(p); }
inline void PrintTo(HeadKind h, std::ostream* os) { *os << to_string(h); }

namespace {

using testing::check_gradients;
using testing::kAbsFloor;
using testing::kRelTol;
using testing::kStep;
using testing::random_cloud;
using testing::tiny_config;

using Case = std::tuple<EncoderVariant, Pooling, HeadKind>;

class GradientCheck : public ::testing::TestWithParam<Case> {};

TEST_P(GradientCheck, MatchesCentralDifferencesOverTenSeeds) {
  const auto [variant, pooling, head] = GetParam();
  const auto config = tiny_config(variant, pooling, head);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::size_t checked = 0;
    const auto bad = check_gradients(config, seed, &checked);
    EXPECT_GT(checked, 0u);
    for (const auto& m : bad) {
      ADD_FAILURE() << "seed " << seed << " " << m.name << "[" << m.entry << "]: analytic " << m.analytic
                    << " numeric " << m.numeric;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllFamilies, GradientCheck,
    ::testing::Combine(::testing::Values(EncoderVariant::pointnet, EncoderVariant::edgeconv),
                       ::testing::Values(Pooling::max, Pooling::netvlad),
                       ::testing::Values(HeadKind::semantic, HeadKind::basic)),
    [](const ::testing::TestParamInfo<Case>& info) {
      return std::string(to_string(std::get<0>(info.param))) + "_" + std::string(to_string(std::get<1>(info.param))) +
             "_" + std::string(to_string(std::get<2>(info.param)));
    });

TEST(GradientCheck, EvalModeBatchNormGradients) {
  auto config = tiny_config(EncoderVariant::pointnet, Pooling::max, HeadKind::basic);
  auto params = init_parameters<double>(config, 5);
  for (auto& l : params.point_layers) {
    l.running_mean.setConstant(0.1);
    l.running_var.setConstant(0.7);
  }
  const PointCloud a = random_cloud(8, 42);
  const auto batch = make_batch<double>(a);
  const std::vector<int> labels = {2};
  const auto g = loss_and_gradients<double>(batch, labels, config, params, nullptr, Mode::eval).gradients;
  auto loss = [&](const ParameterSet<double>& p) {
    return cross_entropy_from_logits<double>(PointSetNetwork<double>(config, p).forward(batch, Mode::eval, nullptr, nullptr),
                                             labels);
  };
  auto& w = params.point_layers[0].weight;
  const auto& gw = g.point_layers[0].weight;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double saved = w.data()[i];
    w.data()[i] = saved + kStep;
    const double up = loss(params);
    w.data()[i] = saved - kStep;
    const double down = loss(params);
    w.data()[i] = saved;
    const double numeric = (up - down) / (2 * kStep);
    EXPECT_TRUE(std::abs(numeric - gw.data()[i]) <= std::max(kAbsFloor, kRelTol * std::abs(numeric)))
        << i << ": " << gw.data()[i] << " vs " << numeric;
  }
}

}  // namespace
}  // namespace zslpc
