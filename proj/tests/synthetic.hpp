// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "zslpc/class_lists.hpp"
#include "zslpc/mesh.hpp"
#include "zslpc/rng.hpp"

// Procedural meshes and on-disk fixtures standing in for the real datasets.
namespace zslpc::synthetic {

inline TriangleMesh box(double sx, double sy, double sz) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) m.vertices.push_back({(i & 1) * sx, ((i >> 1) & 1) * sy, ((i >> 2) & 1) * sz});
  const std::uint32_t quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {1, 3, 7, 5}, {0, 4, 6, 2}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

// Surface of revolution about z: radius(t) for t in [0, 1] over height h.
template <typename Radius>
TriangleMesh revolve(Radius radius, double h, int rings, int segments) {
  TriangleMesh m;
  for (int r = 0; r <= rings; ++r) {
    const double t = static_cast<double>(r) / rings;
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      m.vertices.push_back({radius(t) * std::cos(a), radius(t) * std::sin(a), h * t});
    }
  }
  auto id = [&](int r, int s) { return static_cast<std::uint32_t>(r * segments + (s % segments)); };
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      m.faces.push_back({id(r, s), id(r, s + 1), id(r + 1, s + 1)});
      m.faces.push_back({id(r, s), id(r + 1, s + 1), id(r + 1, s)});
    }
  }
  return m;
}

inline TriangleMesh sphere(double radius) {
  auto m = revolve([&](double t) { return radius * std::sin(std::numbers::pi * t); }, 2.0 * radius, 12, 16);
  for (auto& v : m.vertices) v[2] = radius - radius * std::cos(std::numbers::pi * v[2] / (2.0 * radius));
  return m;
}

inline TriangleMesh cylinder(double radius, double h) {
  return revolve([&](double) { return radius; }, h, 4, 16);
}

inline TriangleMesh cone(double radius, double h) {
  return revolve([&](double t) { return radius * (1.0 - t) + 1e-3; }, h, 4, 16);
}

inline TriangleMesh torus_like(double a, double b) {
  return revolve([&](double t) { return a + b * std::sin(2.0 * std::numbers::pi * t); }, b, 12, 16);
}

// Shape family i (cycled) with per-instance proportions drawn from `seed`.
inline TriangleMesh family_member(int family, std::uint64_t seed) {
  Rng rng(seed);
  const double u = uniform(rng, 0.8, 1.2), v = uniform(rng, 0.8, 1.2);
  switch (family % 5) {
    case 0: return box(1.0 * u, 1.0 * v, 0.2);
    case 1: return sphere(u);
    case 2: return cylinder(0.3 * u, 2.0 * v);
    case 3: return cone(1.0 * u, 1.5 * v);
    default: return torus_like(1.0 * u, 0.3 * v);
  }
}

// ASCII OFF, one triangle per face line.
inline std::string to_off(const TriangleMesh& m) {
  std::ostringstream out;
  out.precision(17);
  out << "OFF\n" << m.vertices.size() << ' ' << m.faces.size() << " 0\n";
  for (const auto& v : m.vertices) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& f : m.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  return out.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

// A ModelNet-shaped tree: every ModelNet40 class gets `train` and `test`
// files; ModelNet10 classes are mirrored under ModelNet10/. Class c uses
// shape family c mod 5.
inline void write_modelnet_tree(const std::filesystem::path& root, int train, int test) {
  int family = 0;
  for (const auto cls : kModelNet40Classes) {
    const std::string name(cls);
    bool in10 = false;
    for (const auto c10 : kModelNet10Classes) in10 = in10 || c10 == cls;
    for (const auto& [split, count] : {std::pair{"train", train}, std::pair{"test", test}}) {
      for (int i = 0; i < count; ++i) {
        const auto file = name + "_" + std::to_string(i + (std::string(split) == "test" ? 1000 : 0)) + ".off";
        const auto text = to_off(family_member(family, fnv1a64(name + split + std::to_string(i))));
        write_file(root / "ModelNet40" / name / split / file, text);
        if (in10) write_file(root / "ModelNet10" / name / split / file, text);
      }
    }
    ++family;
  }
}

// Whitespace-separated text vectors (word2vec/GloVe text layout) for every
// token of every ModelNet40 class plus a few distractors.
inline void write_word_vectors(const std::filesystem::path& path, std::uint64_t seed, bool header, int dim = 300) {
  std::vector<std::string> tokens = {"the", "of", "and"};
  for (const auto cls : kModelNet40Classes) {
    std::string token;
    for (char c : std::string(cls) + "_") {
      if (c == '_') {
        if (!token.empty()) tokens.push_back(token);
        token.clear();
      } else {
        token.push_back(c);
      }
    }
  }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  std::ostringstream out;
  if (header) out << tokens.size() << ' ' << dim << '\n';
  for (const auto& t : tokens) {
    Rng rng(derive_seed(seed, t));
    out << t;
    for (int i = 0; i < dim; ++i) out << ' ' << uniform(rng, -1.0, 1.0);
    out << '\n';
  }
  write_file(path, out.str());
}

}  // namespace zslpc::synthetic
