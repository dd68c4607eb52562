// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zslpc/encoder.hpp"
#include "zslpc/point_cloud.hpp"
#include "zslpc/rng.hpp"
#include "zslpc/semantic_embeddings.hpp"

namespace zslpc::testing {

inline std::filesystem::path source_dir() { return ZSLPC_SOURCE_DIR; }

// Scratch directory unique to one test; removed and recreated on each call.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("zslpc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Gaussian-ish random cloud rescaled to the unit sphere.
inline PointCloud random_cloud(int n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  c.points.resize(3, n);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < 3; ++r) c.points(r, i) = static_cast<float>(uniform(rng, -1.0, 1.0));
  }
  return normalize_unit_sphere(c);
}

// Random table with unit rows.
inline SemanticEmbeddingTable random_table(const std::vector<std::string>& names, int dim, std::uint64_t seed,
                                           SemanticMode mode = SemanticMode::w2v) {
  Rng rng(seed);
  SemanticEmbeddingTable t;
  t.class_names = names;
  t.mode = mode;
  t.embeddings.resize(static_cast<Eigen::Index>(names.size()), dim);
  for (Eigen::Index i = 0; i < t.embeddings.size(); ++i) t.embeddings.data()[i] = uniform(rng, -1.0, 1.0);
  t.embeddings.rowwise().normalize();
  return t;
}

inline std::vector<std::string> class_names(int count, const std::string& prefix = "class") {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// The smallest network of each family used by the gradient and property checks.
inline EncoderConfig tiny_config(EncoderVariant variant, Pooling pooling, HeadKind head) {
  EncoderConfig c;
  c.variant = variant;
  c.pooling = pooling;
  c.head = head;
  c.pointnet_widths = {4, 4};
  c.edge_block1_widths = {4, 4};
  c.edge_block2_widths = {4};
  c.edge_fuse_width = 4;
  c.k = 3;
  c.netvlad_width = 4;
  c.netvlad_centers = 3;
  c.hidden1 = 5;
  c.hidden2 = 4;
  c.embedding_dim = 4;
  c.num_classes = 3;
  return c;
}

}  // namespace zslpc::testing
