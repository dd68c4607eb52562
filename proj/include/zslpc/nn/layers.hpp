// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <vector>

namespace zslpc::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

enum class Mode { train, eval };

// A per-point (shared) layer: W x, optional batch norm, relu. Columns of the
// input are independent points (or edges). With batch norm the affine shift
// is beta and `bias` stays empty.
template <typename S>
struct SharedLayerParams {
  Mat<S> weight;
  Mat<S> bias;
  Mat<S> gamma;
  Mat<S> beta;
  Mat<S> running_mean;
  Mat<S> running_var;

  bool has_batch_norm() const { return gamma.size() != 0; }
};

template <typename S>
struct SharedLayerCache {
  Mat<S> xhat;  // normalized pre-activation (empty without batch norm)
  Vec<S> inv_std;
  Vec<S> batch_mean;
  Vec<S> batch_var;
  Mat<S> output;  // after relu
};

template <typename S>
Mat<S> shared_forward(const SharedLayerParams<S>& p, const Mat<S>& input, Mode mode, S eps,
                      SharedLayerCache<S>* cache) {
  Mat<S> z;
  z.noalias() = p.weight * input;
  if (!p.has_batch_norm()) {
    z.colwise() += p.bias.col(0);
    Mat<S> out = z.cwiseMax(S(0));
    if (cache) cache->output = out;
    return out;
  }
  Vec<S> mean, var;
  if (mode == Mode::train) {
    mean = z.rowwise().mean();
    z.colwise() -= mean;
    var = z.array().square().rowwise().mean();
  } else {
    mean = p.running_mean.col(0);
    var = p.running_var.col(0);
    z.colwise() -= mean;
  }
  const Vec<S> inv_std = (var.array() + eps).rsqrt();
  z.array().colwise() *= inv_std.array();  // z is now xhat
  Mat<S> out = ((z.array().colwise() * p.gamma.col(0).array()).colwise() + p.beta.col(0).array()).cwiseMax(S(0));
  if (cache) {
    cache->xhat = std::move(z);
    cache->inv_std = inv_std;
    cache->batch_mean = mean;
    cache->batch_var = var;
    cache->output = out;
  }
  return out;
}

// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
template <typename S>
Mat<S> shared_backward(const SharedLayerParams<S>& p, const SharedLayerCache<S>& cache, const Mat<S>& input,
                       const Mat<S>& d_output, Mode mode, SharedLayerParams<S>& grad) {
  Mat<S> dz = (cache.output.array() > S(0)).select(d_output.array(), S(0)).matrix();
  if (p.has_batch_norm()) {
    grad.gamma.col(0) += (dz.array() * cache.xhat.array()).rowwise().sum().matrix();
    grad.beta.col(0) += dz.rowwise().sum();
    dz.array().colwise() *= p.gamma.col(0).array();  // d xhat
    if (mode == Mode::train) {
      const S count = static_cast<S>(dz.cols());
      const Vec<S> sum_d = dz.rowwise().sum();
      const Vec<S> sum_dx = (dz.array() * cache.xhat.array()).rowwise().sum();
      dz = (dz * count).colwise() - sum_d;
      dz.array() -= cache.xhat.array().colwise() * sum_dx.array();
      dz.array().colwise() *= cache.inv_std.array() / count;
    } else {
      dz.array().colwise() *= cache.inv_std.array();
    }
  } else {
    grad.bias.col(0) += dz.rowwise().sum();
  }
  grad.weight.noalias() += dz * input.transpose();
  return p.weight.transpose() * dz;
}

// Fully connected layer over a batch of column vectors.
template <typename S>
struct DenseLayerParams {
  Mat<S> weight;
  Mat<S> bias;
};

template <typename S>
Mat<S> dense_forward(const DenseLayerParams<S>& p, const Mat<S>& input, bool relu) {
  Mat<S> out = p.weight * input;
  out.colwise() += p.bias.col(0);
  if (relu) out = out.cwiseMax(S(0));
  return out;
}

template <typename S>
Mat<S> dense_backward(const DenseLayerParams<S>& p, const Mat<S>& input, const Mat<S>& output, Mat<S> d_output,
                      bool relu, DenseLayerParams<S>& grad) {
  if (relu) d_output = (output.array() > S(0)).select(d_output.array(), S(0)).matrix();
  grad.weight.noalias() += d_output * input.transpose();
  grad.bias.col(0) += d_output.rowwise().sum();
  return p.weight.transpose() * d_output;
}

// Column-group maximum: input has groups of `group` consecutive columns;
// output column g is the elementwise max over group g. `argmax` records the
// winning input column per output entry (first one on ties).
template <typename S>
Mat<S> group_max(const Mat<S>& input, Eigen::Index group, std::vector<Eigen::Index>* argmax) {
  const Eigen::Index rows = input.rows();
  const Eigen::Index groups = input.cols() / group;
  Mat<S> out(rows, groups);
  if (argmax) argmax->assign(static_cast<std::size_t>(rows * groups), 0);
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      S best = input(r, g * group);
      Eigen::Index best_col = g * group;
      for (Eigen::Index c = g * group + 1; c < (g + 1) * group; ++c) {
        if (input(r, c) > best) {
          best = input(r, c);
          best_col = c;
        }
      }
      out(r, g) = best;
      if (argmax) (*argmax)[static_cast<std::size_t>(g * rows + r)] = best_col;
    }
  }
  return out;
}

template <typename S>
Mat<S> group_max_backward(const Mat<S>& d_output, const std::vector<Eigen::Index>& argmax, Eigen::Index input_cols) {
  Mat<S> d_input = Mat<S>::Zero(d_output.rows(), input_cols);
  for (Eigen::Index g = 0; g < d_output.cols(); ++g) {
    for (Eigen::Index r = 0; r < d_output.rows(); ++r) {
      d_input(r, argmax[static_cast<std::size_t>(g * d_output.rows() + r)]) += d_output(r, g);
    }
  }
  return d_input;
}

// Column-wise softmax via the max-shift formulation.
template <typename S>
Mat<S> softmax_columns(const Mat<S>& logits) {
  Mat<S> out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const S m = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - m).exp();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

template <typename S>
S log_sum_exp(const Eigen::Ref<const Vec<S>>& v) {
  const S m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace zslpc::nn
