// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>

#include "zslpc/nn/layers.hpp"

namespace zslpc::nn {

// Learnable VLAD aggregation over the points of one sample:
//   a      = softmax_k(assign_weight x_i + assign_bias)      (c x n)
//   V[:,k] = sum_i a_ki (x_i - center_k)                      (D x c)
//   U[:,k] = V[:,k] / |V[:,k]|,  f = vec(U) / |vec(U)|
// Norms are smoothed with kNormEps so the map stays differentiable.
template <typename S>
struct NetVladParams {
  Mat<S> centers;        // D x c
  Mat<S> assign_weight;  // c x D
  Mat<S> assign_bias;    // c x 1
};

template <typename S>
struct NetVladCache {
  Mat<S> assign;   // c x n
  Vec<S> assign_sum;
  Mat<S> residual;  // V, D x c
  Vec<S> residual_norm;
  Mat<S> intra;  // U, D x c
  S global_norm = S(0);
  Vec<S> output;
};

inline constexpr double kNormEps = 1e-12;

template <typename S>
Vec<S> netvlad_forward(const NetVladParams<S>& p, const Eigen::Ref<const Mat<S>>& x, NetVladCache<S>* cache) {
  const S eps = static_cast<S>(kNormEps);
  Mat<S> logits = p.assign_weight * x;
  logits.colwise() += p.assign_bias.col(0);
  Mat<S> assign = softmax_columns<S>(logits);
  Vec<S> assign_sum = assign.rowwise().sum();
  Mat<S> residual = x * assign.transpose();
  residual -= p.centers * assign_sum.asDiagonal();
  Vec<S> residual_norm = (residual.colwise().squaredNorm().array() + eps).sqrt().transpose();
  Mat<S> intra = residual * residual_norm.cwiseInverse().asDiagonal();
  const S global_norm = std::sqrt(intra.squaredNorm() + eps);
  Vec<S> out = Eigen::Map<const Vec<S>>(intra.data(), intra.size()) / global_norm;
  if (cache) {
    cache->assign = std::move(assign);
    cache->assign_sum = std::move(assign_sum);
    cache->residual = std::move(residual);
    cache->residual_norm = std::move(residual_norm);
    cache->intra = std::move(intra);
    cache->global_norm = global_norm;
    cache->output = out;
  }
  return out;
}

// Returns d(loss)/dx (D x n) and accumulates parameter gradients.
template <typename S>
Mat<S> netvlad_backward(const NetVladParams<S>& p, const NetVladCache<S>& c, const Eigen::Ref<const Mat<S>>& x,
                        const Vec<S>& d_output, NetVladParams<S>& grad) {
  const Eigen::Index dims = c.intra.rows();
  const Eigen::Index centers = c.intra.cols();
  // Global l2 normalization: dU = (df - f (f . df)) / R.
  Vec<S> d_flat = (d_output - c.output * c.output.dot(d_output)) / c.global_norm;
  Mat<S> d_intra = Eigen::Map<const Mat<S>>(d_flat.data(), dims, centers);
  // Intra normalization, per center.
  Mat<S> d_residual(dims, centers);
  for (Eigen::Index k = 0; k < centers; ++k) {
    const auto u = c.intra.col(k);
    d_residual.col(k) = (d_intra.col(k) - u * u.dot(d_intra.col(k))) / c.residual_norm[k];
  }
  grad.centers -= d_residual * c.assign_sum.asDiagonal();
  // V = x a^T - C diag(sum_i a_ki)
  Mat<S> d_assign = d_residual.transpose() * x;  // c x n
  const Vec<S> d_assign_sum = -(p.centers.array() * d_residual.array()).colwise().sum().transpose();
  d_assign.colwise() += d_assign_sum;
  Mat<S> d_x = d_residual * c.assign;
  // Softmax over centers, per point.
  const Eigen::Matrix<S, 1, Eigen::Dynamic> dot = (c.assign.array() * d_assign.array()).colwise().sum();
  Mat<S> d_logits = c.assign.array() * (d_assign.rowwise() - dot).array();
  grad.assign_weight.noalias() += d_logits * x.transpose();
  grad.assign_bias.col(0) += d_logits.rowwise().sum();
  d_x.noalias() += p.assign_weight.transpose() * d_logits;
  return d_x;
}

}  // namespace zslpc::nn
