// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "zslpc/error.hpp"

namespace zslpc::nn {

// Row-major n x k neighbor table.
struct NeighborTable {
  Eigen::Index points = 0;
  Eigen::Index k = 0;
  std::vector<Eigen::Index> indices;

  Eigen::Index operator()(Eigen::Index i, Eigen::Index s) const { return indices[static_cast<std::size_t>(i * k + s)]; }
};

// k nearest columns of `points` (dims x n) for every column, excluding the
// column itself; ties go to the lower index. Squared distances are summed
// coordinate by coordinate so each pair's distance does not depend on where
// the pair sits in the matrix.
template <typename Derived>
NeighborTable knn_graph(const Eigen::MatrixBase<Derived>& points, Eigen::Index k) {
  const Eigen::Index n = points.cols();
  const Eigen::Index dims = points.rows();
  if (k < 1 || k >= n) {
    throw UsageError("k-NN needs 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  NeighborTable table;
  table.points = n;
  table.k = k;
  table.indices.resize(static_cast<std::size_t>(n * k));
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t t = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < dims; ++c) {
        const double diff = static_cast<double>(points(c, j)) - static_cast<double>(points(c, i));
        d2 += diff * diff;
      }
      dist[t++] = {d2, j};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (Eigen::Index s = 0; s < k; ++s) table.indices[static_cast<std::size_t>(i * k + s)] = dist[static_cast<std::size_t>(s)].second;
  }
  return table;
}

}  // namespace zslpc::nn
