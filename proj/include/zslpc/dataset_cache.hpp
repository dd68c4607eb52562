// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "zslpc/error.hpp"
#include "zslpc/mesh.hpp"
#include "zslpc/point_cloud.hpp"
#include "zslpc/rng.hpp"
#include "zslpc/split_manifest.hpp"

namespace zslpc {

// Binary point-cloud cache, all integers and floats little-endian:
//   "PCZ1" | u32 version | u32 points per sample | u32 sample count |
//   u32 class count | class count x (u32 byte length, UTF-8 name) |
//   sample count x (u32 class index, points x 3 f32 as x,y,z per point)
inline constexpr char kCacheMagic[4] = {'P', 'C', 'Z', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

struct CachedSample {
  PointCloud cloud;
  std::uint32_t class_index = 0;
};

struct DatasetCache {
  std::uint32_t version = kCacheVersion;
  std::uint32_t point_count = 0;
  std::vector<std::string> class_table;
  std::vector<CachedSample> samples;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  const unsigned char* take(std::size_t n, const std::string& context) {
    if (pos_ + n > bytes_.size()) {
      throw DataError(what_ + ": truncated " + context + " at byte " + std::to_string(pos_));
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32(const std::string& context) { return get_u32(take(4, context)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_cache(const DatasetCache& cache) {
  std::string out(kCacheMagic, 4);
  detail::put_u32(out, cache.version);
  detail::put_u32(out, cache.point_count);
  detail::put_u32(out, static_cast<std::uint32_t>(cache.samples.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(cache.class_table.size()));
  for (const auto& name : cache.class_table) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
  }
  out.reserve(out.size() + cache.samples.size() * (4 + 12 * static_cast<std::size_t>(cache.point_count)));
  for (const auto& s : cache.samples) {
    detail::put_u32(out, s.class_index);
    const float* data = s.cloud.points.data();
    for (Eigen::Index i = 0; i < 3 * s.cloud.size(); ++i) detail::put_u32(out, std::bit_cast<std::uint32_t>(data[i]));
  }
  return out;
}

inline DatasetCache decode_cache(const std::string& bytes, const std::string& what = "cache") {
  detail::ByteReader in(bytes, what);
  if (std::memcmp(in.take(4, "header"), kCacheMagic, 4) != 0) throw DataError(what + ": bad magic");
  DatasetCache cache;
  cache.version = in.u32("header");
  if (cache.version != kCacheVersion) {
    throw DataError(what + ": version mismatch (file " + std::to_string(cache.version) + ", expected " +
                    std::to_string(kCacheVersion) + ")");
  }
  cache.point_count = in.u32("header");
  const auto sample_count = in.u32("header");
  const auto class_count = in.u32("header");
  for (std::uint32_t c = 0; c < class_count; ++c) {
    const auto len = in.u32("class table");
    const auto* p = in.take(len, "class table");
    cache.class_table.emplace_back(reinterpret_cast<const char*>(p), len);
  }
  const std::size_t floats = 3 * static_cast<std::size_t>(cache.point_count);
  cache.samples.reserve(std::min<std::size_t>(sample_count, in.remaining() / (4 + 4 * floats) + 1));
  for (std::uint32_t r = 0; r < sample_count; ++r) {
    const auto context = "record " + std::to_string(r);
    auto& s = cache.samples.emplace_back();
    s.class_index = in.u32(context);
    if (s.class_index >= class_count) throw DataError(what + ": " + context + " has class index out of range");
    const auto* p = in.take(4 * floats, context);
    s.cloud.points.resize(3, cache.point_count);
    float* data = s.cloud.points.data();
    for (std::size_t i = 0; i < floats; ++i) data[i] = std::bit_cast<float>(detail::get_u32(p + 4 * i));
    s.cloud.normalized = true;
  }
  if (in.remaining() != 0) throw DataError(what + ": trailing bytes after the last record");
  return cache;
}

// Writes one record per manifest record, in manifest order.
inline DatasetCache write_cache(std::vector<CachedSample> samples, const SplitManifest& manifest,
                                const std::filesystem::path& path) {
  DatasetCache cache;
  cache.class_table = manifest.class_table();
  if (samples.size() != manifest.records.size()) {
    throw DataError("cache has " + std::to_string(samples.size()) + " samples but the manifest lists " +
                    std::to_string(manifest.records.size()));
  }
  cache.point_count = samples.empty() ? 0 : static_cast<std::uint32_t>(samples.front().cloud.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.cloud.size() != static_cast<Eigen::Index>(cache.point_count)) {
      throw DataError("sample " + std::to_string(i) + " has a different point count");
    }
    if (s.class_index >= cache.class_table.size() ||
        cache.class_table[s.class_index] != manifest.records[i].class_name) {
      throw DataError("sample " + std::to_string(i) + " class index disagrees with the manifest");
    }
  }
  cache.samples = std::move(samples);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto bytes = encode_cache(cache);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
  return cache;
}

inline DatasetCache read_cache(const std::filesystem::path& path) {
  return decode_cache(read_file_bytes(path), path.string());
}

// Loads, samples and normalizes every manifest record. The per-sample seed
// is derive_seed(seed, path), so a record's cloud does not depend on order.
inline std::vector<CachedSample> ingest_records(const std::filesystem::path& root, const SplitManifest& manifest,
                                                int points, std::uint64_t seed) {
  const auto table = manifest.class_table();
  std::vector<CachedSample> samples;
  samples.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    const auto mesh = load_mesh(root / r.path);
    CachedSample s;
    try {
      s.cloud = normalize_unit_sphere(sample_points(mesh, points, derive_seed(seed, r.path)));
    } catch (const Error& e) {
      throw DataError(r.path + ": " + e.what());
    }
    const auto it = std::find(table.begin(), table.end(), r.class_name);
    s.class_index = static_cast<std::uint32_t>(it - table.begin());
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace zslpc
