// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "zslpc/error.hpp"
#include "zslpc/nn/knn.hpp"
#include "zslpc/nn/layers.hpp"
#include "zslpc/nn/netvlad.hpp"
#include "zslpc/point_cloud.hpp"
#include "zslpc/rng.hpp"
#include "zslpc/semantic_embeddings.hpp"

namespace zslpc {

using nn::Mat;
using nn::Mode;
using nn::Vec;

enum class EncoderVariant { pointnet, edgeconv };
enum class Pooling { max, netvlad };
enum class HeadKind { semantic, basic };

inline std::string_view to_string(EncoderVariant v) { return v == EncoderVariant::pointnet ? "pointnet" : "edgeconv"; }
inline std::string_view to_string(Pooling p) { return p == Pooling::max ? "max" : "netvlad"; }
inline std::string_view to_string(HeadKind h) { return h == HeadKind::semantic ? "semantic" : "basic"; }

inline EncoderVariant encoder_variant_from_string(std::string_view s) {
  if (s == "pointnet") return EncoderVariant::pointnet;
  if (s == "edgeconv") return EncoderVariant::edgeconv;
  throw UsageError("unknown encoder '" + std::string(s) + "'");
}

inline Pooling pooling_from_string(std::string_view s) {
  if (s == "max") return Pooling::max;
  if (s == "netvlad") return Pooling::netvlad;
  throw UsageError("unknown pooling '" + std::string(s) + "'");
}

inline HeadKind head_kind_from_string(std::string_view s) {
  if (s == "semantic") return HeadKind::semantic;
  if (s == "basic") return HeadKind::basic;
  throw UsageError("unknown head '" + std::string(s) + "'");
}

/// Architecture hyperparameters.
///
/// EdgeConv composition: block 1 runs its shared layers on edge inputs
/// [p_i, p_j - p_i] over the coordinate k-NN graph and max-reduces over the k
/// edges; block 2 rebuilds the k-NN graph in block-1 feature space and does
/// the same with its own layers; the two per-point outputs are concatenated
/// and passed through one shared layer of width `edge_fuse_width`.
///
/// With NetVLAD pooling a shared pre-pool layer of width `netvlad_width` maps
/// the per-point features to the space the centers live in.
struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::pointnet;
  std::vector<int> pointnet_widths = {64, 64, 64, 128, 1024};
  std::vector<int> edge_block1_widths = {64, 64, 64};
  std::vector<int> edge_block2_widths = {128};
  int edge_fuse_width = 1024;
  int k = 20;
  Pooling pooling = Pooling::max;
  int netvlad_centers = 128;
  int netvlad_width = 128;
  int hidden1 = 512;
  int hidden2 = 400;
  int embedding_dim = 300;  // d, semantic head only
  HeadKind head = HeadKind::semantic;
  int num_classes = 30;  // S
  bool final_relu = false;
  bool batch_norm = true;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  int feature_width() const {
    return variant == EncoderVariant::pointnet ? pointnet_widths.back() : edge_fuse_width;
  }
  int pooled_width() const { return pooling == Pooling::max ? feature_width() : netvlad_width * netvlad_centers; }
  int head_output() const { return head == HeadKind::semantic ? embedding_dim : num_classes; }

  void validate() const {
    auto positive = [](const std::vector<int>& w, const char* what) {
      if (w.empty()) throw UsageError(std::string(what) + " must not be empty");
      for (int x : w) {
        if (x <= 0) throw UsageError(std::string(what) + " must be positive");
      }
    };
    if (variant == EncoderVariant::pointnet) {
      positive(pointnet_widths, "pointnet widths");
    } else {
      positive(edge_block1_widths, "edgeconv block-1 widths");
      positive(edge_block2_widths, "edgeconv block-2 widths");
      if (edge_fuse_width <= 0 || k <= 0) throw UsageError("edgeconv widths and k must be positive");
    }
    if (pooling == Pooling::netvlad && (netvlad_centers <= 0 || netvlad_width <= 0)) {
      throw UsageError("netvlad sizes must be positive");
    }
    if (hidden1 <= 0 || hidden2 <= 0 || num_classes <= 0 || embedding_dim <= 0) {
      throw UsageError("head sizes must be positive");
    }
  }
};

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"pointnet_widths", c.pointnet_widths},
          {"edge_block1_widths", c.edge_block1_widths},
          {"edge_block2_widths", c.edge_block2_widths},
          {"edge_fuse_width", c.edge_fuse_width},
          {"k", c.k},
          {"pooling", to_string(c.pooling)},
          {"netvlad_centers", c.netvlad_centers},
          {"netvlad_width", c.netvlad_width},
          {"hidden1", c.hidden1},
          {"hidden2", c.hidden2},
          {"embedding_dim", c.embedding_dim},
          {"head", to_string(c.head)},
          {"num_classes", c.num_classes},
          {"final_relu", c.final_relu},
          {"batch_norm", c.batch_norm},
          {"bn_momentum", c.bn_momentum},
          {"bn_eps", c.bn_eps}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
  c.pointnet_widths = j.at("pointnet_widths").get<std::vector<int>>();
  c.edge_block1_widths = j.at("edge_block1_widths").get<std::vector<int>>();
  c.edge_block2_widths = j.at("edge_block2_widths").get<std::vector<int>>();
  c.edge_fuse_width = j.at("edge_fuse_width").get<int>();
  c.k = j.at("k").get<int>();
  c.pooling = pooling_from_string(j.at("pooling").get<std::string>());
  c.netvlad_centers = j.at("netvlad_centers").get<int>();
  c.netvlad_width = j.at("netvlad_width").get<int>();
  c.hidden1 = j.at("hidden1").get<int>();
  c.hidden2 = j.at("hidden2").get<int>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.head = head_kind_from_string(j.at("head").get<std::string>());
  c.num_classes = j.at("num_classes").get<int>();
  c.final_relu = j.at("final_relu").get<bool>();
  c.batch_norm = j.at("batch_norm").get<bool>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.validate();
  return c;
}

/// All learnable weights plus batch-norm running statistics.
template <typename S>
struct ParameterSet {
  std::vector<nn::SharedLayerParams<S>> point_layers;    // pointnet stack, or edgeconv block 1
  std::vector<nn::SharedLayerParams<S>> edge_layers;     // edgeconv block 2
  std::vector<nn::SharedLayerParams<S>> fuse_layers;     // edgeconv concat layer
  std::vector<nn::SharedLayerParams<S>> prepool_layers;  // netvlad pre-pool layer
  std::vector<nn::NetVladParams<S>> netvlad;
  std::vector<nn::DenseLayerParams<S>> head_layers;  // projection (semantic) or classifier (basic)
  HeadKind head = HeadKind::semantic;

  // Calls f(name, matrix, trainable) for every non-empty tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Mat<S>& m, bool trainable) {
      if (trainable) n += static_cast<std::size_t>(m.size());
    });
    return n;
  }

  // Same shapes, all zeros.
  ParameterSet zeros_like() const {
    ParameterSet out = *this;
    out.visit([](const std::string&, Mat<S>& m, bool) { m.setZero(); });
    return out;
  }

  template <typename T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    auto shared = [](const auto& v) {
      std::vector<nn::SharedLayerParams<T>> r;
      for (const auto& l : v) {
        r.push_back({l.weight.template cast<T>(), l.bias.template cast<T>(), l.gamma.template cast<T>(),
                     l.beta.template cast<T>(), l.running_mean.template cast<T>(), l.running_var.template cast<T>()});
      }
      return r;
    };
    out.point_layers = shared(point_layers);
    out.edge_layers = shared(edge_layers);
    out.fuse_layers = shared(fuse_layers);
    out.prepool_layers = shared(prepool_layers);
    for (const auto& v : netvlad) {
      out.netvlad.push_back(
          {v.centers.template cast<T>(), v.assign_weight.template cast<T>(), v.assign_bias.template cast<T>()});
    }
    for (const auto& l : head_layers) out.head_layers.push_back({l.weight.template cast<T>(), l.bias.template cast<T>()});
    out.head = head;
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    auto shared = [&](auto& layers, const std::string& prefix) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto base = prefix + "." + std::to_string(i) + ".";
        auto& l = layers[i];
        f(base + "weight", l.weight, true);
        if (l.bias.size()) f(base + "bias", l.bias, true);
        if (l.gamma.size()) {
          f(base + "gamma", l.gamma, true);
          f(base + "beta", l.beta, true);
          f(base + "running_mean", l.running_mean, false);
          f(base + "running_var", l.running_var, false);
        }
      }
    };
    shared(self.point_layers, "point");
    shared(self.edge_layers, "edge");
    shared(self.fuse_layers, "fuse");
    shared(self.prepool_layers, "prepool");
    for (auto& v : self.netvlad) {
      f("netvlad.centers", v.centers, true);
      f("netvlad.assign_weight", v.assign_weight, true);
      f("netvlad.assign_bias", v.assign_bias, true);
    }
    const std::string head_prefix = self.head == HeadKind::semantic ? "proj" : "cls";
    for (std::size_t i = 0; i < self.head_layers.size(); ++i) {
      auto& l = self.head_layers[i];
      f(head_prefix + "." + std::to_string(i) + ".weight", l.weight, true);
      f(head_prefix + "." + std::to_string(i) + ".bias", l.bias, true);
    }
  }
};

namespace detail {

inline void fill_uniform(Mat<double>& m, std::uint64_t seed, const std::string& name, double limit) {
  Rng rng(derive_seed(seed, name));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -limit, limit);
}

inline nn::SharedLayerParams<double> make_shared(int in, int out, bool bn, std::uint64_t seed,
                                                 const std::string& name) {
  nn::SharedLayerParams<double> l;
  l.weight.resize(out, in);
  fill_uniform(l.weight, seed, name + ".weight", std::sqrt(6.0 / in));
  if (bn) {
    l.gamma = Mat<double>::Ones(out, 1);
    l.beta = Mat<double>::Zero(out, 1);
    l.running_mean = Mat<double>::Zero(out, 1);
    l.running_var = Mat<double>::Ones(out, 1);
  } else {
    l.bias = Mat<double>::Zero(out, 1);
  }
  return l;
}

inline nn::DenseLayerParams<double> make_dense(int in, int out, std::uint64_t seed, const std::string& name) {
  nn::DenseLayerParams<double> l;
  l.weight.resize(out, in);
  fill_uniform(l.weight, seed, name + ".weight", std::sqrt(6.0 / in));
  l.bias = Mat<double>::Zero(out, 1);
  return l;
}

}  // namespace detail

/// Deterministic initialization: each weight tensor is drawn from
/// U(-sqrt(6/fan_in), sqrt(6/fan_in)) with a stream seeded by (seed, tensor
/// name); biases and batch-norm shifts are zero, batch-norm scales one.
template <typename S>
ParameterSet<S> init_parameters(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterSet<double> p;
  p.head = config.head;
  const bool bn = config.batch_norm;
  int in = 3;
  if (config.variant == EncoderVariant::pointnet) {
    for (std::size_t i = 0; i < config.pointnet_widths.size(); ++i) {
      p.point_layers.push_back(detail::make_shared(in, config.pointnet_widths[i], bn, seed, "point." + std::to_string(i)));
      in = config.pointnet_widths[i];
    }
  } else {
    in = 6;
    for (std::size_t i = 0; i < config.edge_block1_widths.size(); ++i) {
      p.point_layers.push_back(
          detail::make_shared(in, config.edge_block1_widths[i], bn, seed, "point." + std::to_string(i)));
      in = config.edge_block1_widths[i];
    }
    const int block1_out = in;
    in = 2 * block1_out;
    for (std::size_t i = 0; i < config.edge_block2_widths.size(); ++i) {
      p.edge_layers.push_back(
          detail::make_shared(in, config.edge_block2_widths[i], bn, seed, "edge." + std::to_string(i)));
      in = config.edge_block2_widths[i];
    }
    p.fuse_layers.push_back(detail::make_shared(block1_out + in, config.edge_fuse_width, bn, seed, "fuse.0"));
    in = config.edge_fuse_width;
  }
  if (config.pooling == Pooling::netvlad) {
    p.prepool_layers.push_back(detail::make_shared(in, config.netvlad_width, bn, seed, "prepool.0"));
    nn::NetVladParams<double> v;
    const int dims = config.netvlad_width, centers = config.netvlad_centers;
    v.centers.resize(dims, centers);
    detail::fill_uniform(v.centers, seed, "netvlad.centers", std::sqrt(6.0 / dims));
    v.assign_weight.resize(centers, dims);
    detail::fill_uniform(v.assign_weight, seed, "netvlad.assign_weight", std::sqrt(6.0 / dims));
    v.assign_bias = Mat<double>::Zero(centers, 1);
    p.netvlad.push_back(std::move(v));
  }
  const std::string head = config.head == HeadKind::semantic ? "proj" : "cls";
  p.head_layers.push_back(detail::make_dense(config.pooled_width(), config.hidden1, seed, head + ".0"));
  p.head_layers.push_back(detail::make_dense(config.hidden1, config.hidden2, seed, head + ".1"));
  p.head_layers.push_back(detail::make_dense(config.hidden2, config.head_output(), seed, head + ".2"));
  if constexpr (std::is_same_v<S, double>) {
    return p;
  } else {
    return p.template cast<S>();
  }
}

/// Checks every tensor's shape against the config.
template <typename S>
void check_parameter_shapes(const EncoderConfig& config, const ParameterSet<S>& params) {
  const auto expected = init_parameters<float>(config, 0);
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> want, got;
  expected.visit([&](const std::string& n, const Mat<float>& m, bool) { want.push_back({n, {m.rows(), m.cols()}}); });
  params.visit([&](const std::string& n, const Mat<S>& m, bool) { got.push_back({n, {m.rows(), m.cols()}}); });
  if (want != got) throw DataError("parameter shapes do not match the encoder configuration");
}

/// Column-stacked input batch: `coords` is 3 x (batch * points).
template <typename S>
struct PointBatch {
  Mat<S> coords;
  Eigen::Index batch = 0;
  Eigen::Index points = 0;
};

template <typename S>
PointBatch<S> make_batch(std::span<const PointCloud* const> clouds) {
  if (clouds.empty()) throw UsageError("empty batch");
  PointBatch<S> b;
  b.batch = static_cast<Eigen::Index>(clouds.size());
  b.points = clouds.front()->size();
  if (b.points == 0) throw DataError("empty point cloud");
  b.coords.resize(3, b.batch * b.points);
  for (Eigen::Index i = 0; i < b.batch; ++i) {
    const auto& c = *clouds[static_cast<std::size_t>(i)];
    if (c.size() != b.points) throw DataError("all clouds in a batch need the same point count");
    b.coords.middleCols(i * b.points, b.points) = c.points.cast<S>();
  }
  return b;
}

template <typename S>
PointBatch<S> make_batch(const PointCloud& cloud) {
  const PointCloud* one[] = {&cloud};
  return make_batch<S>(std::span<const PointCloud* const>(one));
}

/// Everything the backward pass needs from one forward pass.
template <typename S>
struct ForwardTrace {
  Mode mode = Mode::eval;
  Eigen::Index batch = 0;
  Eigen::Index points = 0;
  Mat<S> input;  // pointnet: coords; edgeconv: block-1 edge inputs
  std::vector<nn::SharedLayerCache<S>> point_caches;
  // edgeconv
  std::vector<nn::NeighborTable> graph1, graph2;
  std::vector<Eigen::Index> argmax1, argmax2;
  Mat<S> block1_out, edge_input2;
  std::vector<nn::SharedLayerCache<S>> edge_caches;
  Mat<S> block2_out, concat;
  std::vector<nn::SharedLayerCache<S>> fuse_caches;
  Mat<S> features;  // per-point features, m x (batch * points)
  // pooling
  std::vector<Eigen::Index> pool_argmax;
  std::vector<nn::SharedLayerCache<S>> prepool_caches;
  std::vector<nn::NetVladCache<S>> vlad_caches;
  Mat<S> pooled;
  // head
  std::vector<Mat<S>> head_outputs;
  Mat<S> logits;
};

/// Forward/backward evaluation of one encoder configuration against one
/// parameter set. `table` (classes x d) is required for the semantic head.
template <typename S>
class PointSetNetwork {
 public:
  PointSetNetwork(const EncoderConfig& config, const ParameterSet<S>& params) : config_(config), params_(params) {
    config_.validate();
  }

  const EncoderConfig& config() const { return config_; }
  const ParameterSet<S>& params() const { return params_; }

  Mat<S> features(const PointBatch<S>& batch, Mode mode, ForwardTrace<S>* trace) const {
    if (batch.coords.rows() != 3) throw DataError("point batch must have 3 coordinate rows");
    ForwardTrace<S> local;
    auto& t = trace ? *trace : local;
    t.mode = mode;
    t.batch = batch.batch;
    t.points = batch.points;
    const S eps = static_cast<S>(config_.bn_eps);
    if (config_.variant == EncoderVariant::pointnet) {
      t.input = batch.coords;
      t.features = run_stack(params_.point_layers, t.input, mode, eps, t.point_caches);
    } else {
      const Eigen::Index k = config_.k;
      t.graph1 = graphs(batch.coords, batch, k);
      t.input = edge_inputs(batch.coords, t.graph1, batch.points);
      Mat<S> a1 = run_stack(params_.point_layers, t.input, mode, eps, t.point_caches);
      t.block1_out = nn::group_max<S>(a1, k, &t.argmax1);
      t.graph2 = graphs(t.block1_out, batch, k);
      t.edge_input2 = edge_inputs(t.block1_out, t.graph2, batch.points);
      Mat<S> a2 = run_stack(params_.edge_layers, t.edge_input2, mode, eps, t.edge_caches);
      t.block2_out = nn::group_max<S>(a2, k, &t.argmax2);
      t.concat.resize(t.block1_out.rows() + t.block2_out.rows(), t.block1_out.cols());
      t.concat << t.block1_out, t.block2_out;
      t.features = run_stack(params_.fuse_layers, t.concat, mode, eps, t.fuse_caches);
    }
    return t.features;
  }

  Mat<S> pool(const Mat<S>& features, Eigen::Index batch, Eigen::Index points, Mode mode,
              ForwardTrace<S>* trace) const {
    if (features.cols() != batch * points || features.rows() != config_.feature_width()) {
      throw DataError("per-point feature shape does not match the configuration");
    }
    ForwardTrace<S> local;
    auto& t = trace ? *trace : local;
    if (config_.pooling == Pooling::max) {
      t.pooled = nn::group_max<S>(features, points, &t.pool_argmax);
    } else {
      const Mat<S> x = run_stack(params_.prepool_layers, features, mode, static_cast<S>(config_.bn_eps),
                                 t.prepool_caches);
      const auto& vlad = params_.netvlad.front();
      t.pooled.resize(config_.pooled_width(), batch);
      t.vlad_caches.resize(static_cast<std::size_t>(batch));
      for (Eigen::Index b = 0; b < batch; ++b) {
        t.pooled.col(b) = nn::netvlad_forward<S>(vlad, x.middleCols(b * points, points),
                                                 &t.vlad_caches[static_cast<std::size_t>(b)]);
      }
    }
    return t.pooled;
  }

  // Three fully connected layers; relu after the first two (and the third when final_relu).
  Mat<S> head(const Mat<S>& pooled, ForwardTrace<S>* trace) const {
    if (pooled.rows() != config_.pooled_width()) throw DataError("pooled feature length does not match the config");
    std::vector<Mat<S>> outs;
    const Mat<S>* x = &pooled;
    for (std::size_t i = 0; i < params_.head_layers.size(); ++i) {
      outs.push_back(nn::dense_forward(params_.head_layers[i], *x, relu_after(i)));
      x = &outs.back();
    }
    Mat<S> out = outs.back();
    if (trace) trace->head_outputs = std::move(outs);
    return out;
  }

  Mat<S> logits_from_head(const Mat<S>& head_out, const Mat<S>* table) const {
    if (config_.head == HeadKind::basic) return head_out;
    if (!table) throw UsageError("the semantic head needs an embedding table");
    if (table->cols() != head_out.rows() || table->rows() != config_.num_classes) {
      throw DataError("embedding table shape does not match the encoder (d or S mismatch)");
    }
    return *table * head_out;
  }

  Mat<S> forward(const PointBatch<S>& batch, Mode mode, const Mat<S>* table, ForwardTrace<S>* trace) const {
    ForwardTrace<S> local;
    auto& t = trace ? *trace : local;
    const Mat<S> f = features(batch, mode, &t);
    const Mat<S> pooled = pool(f, batch.batch, batch.points, mode, &t);
    const Mat<S> h = head(pooled, &t);
    t.logits = logits_from_head(h, table);
    return t.logits;
  }

  // Gradients of a loss whose derivative w.r.t. the logits is `d_logits`.
  ParameterSet<S> backward(const ForwardTrace<S>& t, const Mat<S>& d_logits, const Mat<S>* table) const {
    ParameterSet<S> g = params_.zeros_like();
    Mat<S> d = config_.head == HeadKind::semantic ? Mat<S>(table->transpose() * d_logits) : d_logits;
    for (std::size_t i = params_.head_layers.size(); i-- > 0;) {
      const Mat<S>& in = i == 0 ? t.pooled : t.head_outputs[i - 1];
      d = nn::dense_backward(params_.head_layers[i], in, t.head_outputs[i], std::move(d), relu_after(i),
                             g.head_layers[i]);
    }
    Mat<S> d_features;
    if (config_.pooling == Pooling::max) {
      d_features = nn::group_max_backward<S>(d, t.pool_argmax, t.features.cols());
    } else {
      const auto& x = t.prepool_caches.back().output;
      Mat<S> d_x(x.rows(), x.cols());
      for (Eigen::Index b = 0; b < t.batch; ++b) {
        d_x.middleCols(b * t.points, t.points) =
            nn::netvlad_backward<S>(params_.netvlad.front(), t.vlad_caches[static_cast<std::size_t>(b)],
                                    x.middleCols(b * t.points, t.points), d.col(b), g.netvlad.front());
      }
      d_features = backward_stack(params_.prepool_layers, t.prepool_caches, t.features, std::move(d_x), t.mode,
                                  g.prepool_layers);
    }
    if (config_.variant == EncoderVariant::pointnet) {
      backward_stack(params_.point_layers, t.point_caches, t.input, std::move(d_features), t.mode, g.point_layers);
    } else {
      Mat<S> d_concat = backward_stack(params_.fuse_layers, t.fuse_caches, t.concat, std::move(d_features), t.mode,
                                       g.fuse_layers);
      const Eigen::Index c1 = t.block1_out.rows();
      Mat<S> d_block1 = d_concat.topRows(c1);
      Mat<S> d_a2 = nn::group_max_backward<S>(d_concat.bottomRows(d_concat.rows() - c1), t.argmax2,
                                              t.edge_input2.cols());
      Mat<S> d_edge2 = backward_stack(params_.edge_layers, t.edge_caches, t.edge_input2, std::move(d_a2), t.mode,
                                      g.edge_layers);
      edge_inputs_backward(d_edge2, t.graph2, t.points, d_block1);
      Mat<S> d_a1 = nn::group_max_backward<S>(d_block1, t.argmax1, t.input.cols());
      backward_stack(params_.point_layers, t.point_caches, t.input, std::move(d_a1), t.mode, g.point_layers);
    }
    return g;
  }

 private:
  bool relu_after(std::size_t layer) const { return layer + 1 < params_.head_layers.size() || config_.final_relu; }

  static Mat<S> run_stack(const std::vector<nn::SharedLayerParams<S>>& layers, const Mat<S>& input, Mode mode, S eps,
                          std::vector<nn::SharedLayerCache<S>>& caches) {
    caches.assign(layers.size(), {});
    const Mat<S>* x = &input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      nn::shared_forward(layers[i], *x, mode, eps, &caches[i]);
      x = &caches[i].output;
    }
    return *x;
  }

  static Mat<S> backward_stack(const std::vector<nn::SharedLayerParams<S>>& layers,
                               const std::vector<nn::SharedLayerCache<S>>& caches, const Mat<S>& input, Mat<S> d,
                               Mode mode, std::vector<nn::SharedLayerParams<S>>& grads) {
    for (std::size_t i = layers.size(); i-- > 0;) {
      const Mat<S>& in = i == 0 ? input : caches[i - 1].output;
      d = nn::shared_backward(layers[i], caches[i], in, d, mode, grads[i]);
    }
    return d;
  }

  static std::vector<nn::NeighborTable> graphs(const Mat<S>& x, const PointBatch<S>& batch, Eigen::Index k) {
    std::vector<nn::NeighborTable> out;
    for (Eigen::Index b = 0; b < batch.batch; ++b) {
      out.push_back(nn::knn_graph(x.middleCols(b * batch.points, batch.points), k));
    }
    return out;
  }

  // Column (sample b, point i, slot s) holds [x_i ; x_j - x_i] for the s-th neighbor j.
  static Mat<S> edge_inputs(const Mat<S>& x, const std::vector<nn::NeighborTable>& graphs, Eigen::Index points) {
    const Eigen::Index c = x.rows();
    const Eigen::Index k = graphs.front().k;
    Mat<S> e(2 * c, x.cols() * k);
    for (std::size_t b = 0; b < graphs.size(); ++b) {
      const Eigen::Index base = static_cast<Eigen::Index>(b) * points;
      for (Eigen::Index i = 0; i < points; ++i) {
        for (Eigen::Index s = 0; s < k; ++s) {
          const Eigen::Index col = (base + i) * k + s;
          const Eigen::Index j = base + graphs[b](i, s);
          e.col(col).head(c) = x.col(base + i);
          e.col(col).tail(c) = x.col(j) - x.col(base + i);
        }
      }
    }
    return e;
  }

  static void edge_inputs_backward(const Mat<S>& d_edges, const std::vector<nn::NeighborTable>& graphs,
                                   Eigen::Index points, Mat<S>& d_x) {
    const Eigen::Index c = d_x.rows();
    const Eigen::Index k = graphs.front().k;
    for (std::size_t b = 0; b < graphs.size(); ++b) {
      const Eigen::Index base = static_cast<Eigen::Index>(b) * points;
      for (Eigen::Index i = 0; i < points; ++i) {
        for (Eigen::Index s = 0; s < k; ++s) {
          const Eigen::Index col = (base + i) * k + s;
          const Eigen::Index j = base + graphs[b](i, s);
          d_x.col(base + i) += d_edges.col(col).head(c) - d_edges.col(col).tail(c);
          d_x.col(j) += d_edges.col(col).tail(c);
        }
      }
    }
  }

  EncoderConfig config_;
  const ParameterSet<S>& params_;
};

/// Seen-class logits f'' and softmax probabilities y, one column per sample.
template <typename S>
struct SeenScores {
  Mat<S> logits;
  Mat<S> probabilities;
};

template <typename S>
SeenScores<S> scores_from_logits(Mat<S> logits) {
  SeenScores<S> out;
  out.probabilities = nn::softmax_columns<S>(logits);
  out.logits = std::move(logits);
  return out;
}

/// Mean over columns of -log softmax(logits)[label].
template <typename S>
S cross_entropy_from_logits(const Mat<S>& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) throw UsageError("label count mismatch");
  S total = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    if (y < 0 || y >= logits.rows()) throw UsageError("label out of range");
    total += nn::log_sum_exp<S>(logits.col(c)) - logits(y, c);
  }
  return total / static_cast<S>(logits.cols());
}

// d(mean cross entropy)/d(logits) = (softmax - onehot) / batch.
template <typename S>
Mat<S> cross_entropy_gradient(const Mat<S>& logits, std::span<const int> labels) {
  Mat<S> d = nn::softmax_columns<S>(logits);
  for (Eigen::Index c = 0; c < logits.cols(); ++c) d(labels[static_cast<std::size_t>(c)], c) -= S(1);
  return d / static_cast<S>(logits.cols());
}

// ---- single-cloud operations (inference mode: frozen batch-norm statistics) ----

template <typename S>
Mat<S> per_point_features(const PointCloud& cloud, const EncoderConfig& config, const ParameterSet<S>& params) {
  if (!cloud.normalized) throw DataError("per-point features expect a normalized cloud");
  return PointSetNetwork<S>(config, params).features(make_batch<S>(cloud), Mode::eval, nullptr);
}

template <typename S>
Vec<S> pool(const Mat<S>& features, const EncoderConfig& config, const ParameterSet<S>& params) {
  if (features.cols() == 0) throw DataError("cannot pool an empty feature matrix");
  return PointSetNetwork<S>(config, params).pool(features, 1, features.cols(), Mode::eval, nullptr).col(0);
}

template <typename S>
Vec<S> project_to_semantic(const Vec<S>& pooled, const EncoderConfig& config, const ParameterSet<S>& params) {
  if (config.head != HeadKind::semantic) throw UsageError("projection requires the semantic head");
  return PointSetNetwork<S>(config, params).head(pooled, nullptr).col(0);
}

template <typename S>
SeenScores<S> seen_scores(const Vec<S>& embedding, const SemanticEmbeddingTable& table) {
  if (embedding.size() != table.dim()) throw DataError("embedding dimension does not match the table");
  return scores_from_logits<S>(table.embeddings.cast<S>() * embedding);
}

template <typename S>
SeenScores<S> basic_scores(const Vec<S>& pooled, const EncoderConfig& config, const ParameterSet<S>& params) {
  if (config.head != HeadKind::basic) throw UsageError("basic scores require the basic head");
  return scores_from_logits<S>(PointSetNetwork<S>(config, params).head(pooled, nullptr));
}

template <typename S>
S cross_entropy_loss(const SeenScores<S>& scores, int label) {
  const int labels[] = {label};
  return cross_entropy_from_logits<S>(scores.logits.leftCols(1), labels);
}

/// Full inference for one cloud: seen-class scores under the configured head.
template <typename S>
SeenScores<S> classify_seen(const PointCloud& cloud, const EncoderConfig& config, const ParameterSet<S>& params,
                            const Mat<S>* table) {
  PointSetNetwork<S> net(config, params);
  return scores_from_logits<S>(net.forward(make_batch<S>(cloud), Mode::eval, table, nullptr));
}

template <typename S>
struct LossAndGradients {
  S loss = S(0);
  ParameterSet<S> gradients;
  ForwardTrace<S> trace;
};

// Mean cross-entropy over a batch and its exact gradient for every trainable tensor.
template <typename S>
LossAndGradients<S> loss_and_gradients(const PointBatch<S>& batch, std::span<const int> labels,
                                       const EncoderConfig& config, const ParameterSet<S>& params,
                                       const Mat<S>* table, Mode mode = Mode::train) {
  PointSetNetwork<S> net(config, params);
  LossAndGradients<S> out;
  const Mat<S> logits = net.forward(batch, mode, table, &out.trace);
  out.loss = cross_entropy_from_logits<S>(logits, labels);
  out.gradients = net.backward(out.trace, cross_entropy_gradient<S>(logits, labels), table);
  out.gradients.visit([](const std::string& name, const Mat<S>& m, bool trainable) {
    if (trainable && !m.allFinite()) throw NumericError("non-finite gradient in " + name);
  });
  return out;
}

template <typename S>
ParameterSet<S> parameter_gradients(const PointCloud& cloud, int label, const EncoderConfig& config,
                                    const ParameterSet<S>& params, const Mat<S>* table, Mode mode = Mode::train) {
  const int labels[] = {label};
  return loss_and_gradients<S>(make_batch<S>(cloud), labels, config, params, table, mode).gradients;
}

}  // namespace zslpc
