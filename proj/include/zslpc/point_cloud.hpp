// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "zslpc/error.hpp"
#include "zslpc/mesh.hpp"
#include "zslpc/rng.hpp"

namespace zslpc {

inline constexpr int kDefaultPointCount = 1024;

// One object as an unordered point set; column i is point i (x, y, z).
struct PointCloud {
  Eigen::Matrix3Xf points;
  bool normalized = false;

  Eigen::Index size() const { return points.cols(); }
};

struct SurfaceSample {
  PointCloud cloud;
  std::vector<std::uint32_t> face_of_point;
};

inline double triangle_area(const TriangleMesh& mesh, const std::array<std::uint32_t, 3>& f) {
  const Eigen::Vector3d a(mesh.vertices[f[0]].data());
  const Eigen::Vector3d b(mesh.vertices[f[1]].data());
  const Eigen::Vector3d c(mesh.vertices[f[2]].data());
  return 0.5 * (b - a).cross(c - a).norm();
}

// Area-weighted uniform surface sampling. Zero-area faces are never chosen.
inline SurfaceSample sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  if (n <= 0) throw UsageError("point count must be positive");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += triangle_area(mesh, mesh.faces[f]);
    cumulative[f] = total;
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw DataError("mesh has zero total surface area");

  Rng rng(seed);
  SurfaceSample out;
  out.cloud.points.resize(3, n);
  out.face_of_point.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double target = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    const auto f = static_cast<std::size_t>(it - cumulative.begin());
    const auto& face = mesh.faces[f];
    const double r1 = std::sqrt(uniform01(rng));
    const double r2 = uniform01(rng);
    const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    for (int c = 0; c < 3; ++c) {
      const double v = wa * mesh.vertices[face[0]][c] + wb * mesh.vertices[face[1]][c] + wc * mesh.vertices[face[2]][c];
      out.cloud.points(c, i) = static_cast<float>(v);
    }
    out.face_of_point[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(f);
  }
  return out;
}

inline PointCloud sample_points(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  return sample_surface(mesh, n, seed).cloud;
}

// Centers on the centroid and scales so the farthest point has norm 1.
inline PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  if (cloud.size() == 0) throw DataError("cannot normalize an empty cloud");
  if (!cloud.points.allFinite()) throw DataError("cloud has non-finite coordinates");
  const Eigen::Matrix3Xd p = cloud.points.cast<double>();
  const Eigen::Vector3d centroid = p.rowwise().mean();
  const Eigen::Matrix3Xd centered = p.colwise() - centroid;
  const double scale = centered.colwise().norm().maxCoeff();
  if (!(scale > 1e-12)) throw DataError("degenerate cloud: all points coincide");
  PointCloud out;
  out.points = (centered / scale).cast<float>();
  out.normalized = true;
  return out;
}

}  // namespace zslpc
