// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "modelnet_layout.hpp"
#include "support.hpp"
#include "synthetic.hpp"
#include "zslpc/dataset_cache.hpp"

namespace zslpc {
namespace {

SplitManifest small_manifest() {
  return build_split_manifest(testing::flat_layout(kMcGill, kMcGillClasses, 3), "mcgill", 0);
}

std::vector<CachedSample> random_samples(const SplitManifest& m, std::size_t count, int points) {
  const auto table = m.class_table();
  std::vector<CachedSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    CachedSample s;
    s.cloud = testing::random_cloud(points, 100 + i);
    const auto& name = m.records[i].class_name;
    s.class_index = static_cast<std::uint32_t>(std::find(table.begin(), table.end(), name) - table.begin());
    out.push_back(std::move(s));
  }
  return out;
}

TEST(DatasetCache, RoundTripIsBitExact) {
  auto m = small_manifest();
  m.records.resize(3);
  const auto dir = testing::scratch_dir("cache_roundtrip");
  const auto samples = random_samples(m, 3, 64);
  write_cache(samples, m, dir / "c.pcz");
  const auto back = read_cache(dir / "c.pcz");
  EXPECT_EQ(back.point_count, 64u);
  EXPECT_EQ(back.class_table, m.class_table());
  ASSERT_EQ(back.samples.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.samples[i].class_index, samples[i].class_index);
    EXPECT_EQ(std::memcmp(back.samples[i].cloud.points.data(), samples[i].cloud.points.data(), 64 * 3 * sizeof(float)), 0);
  }
}

TEST(DatasetCache, LittleEndianLayout) {
  DatasetCache c;
  c.point_count = 1;
  c.class_table = {"a"};
  CachedSample s;
  s.cloud.points = Eigen::Matrix3Xf(3, 1);
  s.cloud.points << 1.0f, -2.0f, 0.5f;
  c.samples.push_back(s);
  const auto bytes = encode_cache(c);
  EXPECT_EQ(bytes.substr(0, 4), "PCZ1");
  ASSERT_EQ(bytes.size(), 4u + 16u + 4u + 1u + 4u + 12u);
  // 1.0f = 0x3f800000, stored low byte first.
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 29;
  EXPECT_EQ(p[0], 0x00);
  EXPECT_EQ(p[3], 0x3f);
}

TEST(DatasetCache, TruncationNamesTheRecord) {
  auto m = small_manifest();
  m.records.resize(3);
  const auto dir = testing::scratch_dir("cache_truncated");
  write_cache(random_samples(m, 3, 32), m, dir / "c.pcz");
  const auto size = std::filesystem::file_size(dir / "c.pcz");
  std::filesystem::resize_file(dir / "c.pcz", size - 100);
  try {
    read_cache(dir / "c.pcz");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated record 2"), std::string::npos) << e.what();
  }
}

TEST(DatasetCache, RejectsBadMagicVersionAndTrailingBytes) {
  DatasetCache c;
  c.point_count = 2;
  c.class_table = {"a"};
  auto bytes = encode_cache(c);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_cache(bad_magic), DataError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  try {
    decode_cache(bad_version);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(decode_cache(bytes + "x"), DataError);
}

TEST(DatasetCache, WriteValidatesAgainstManifest) {
  auto m = small_manifest();
  m.records.resize(2);
  const auto dir = testing::scratch_dir("cache_validate");
  auto samples = random_samples(m, 2, 16);
  auto wrong_class = samples;
  wrong_class[1].class_index = (wrong_class[1].class_index + 1) % m.class_table().size();
  EXPECT_THROW(write_cache(wrong_class, m, dir / "c.pcz"), DataError);
  samples.pop_back();
  EXPECT_THROW(write_cache(samples, m, dir / "c.pcz"), DataError);
}

TEST(IngestRecords, DeterministicPerPathAndNormalized) {
  const auto root = testing::scratch_dir("ingest");
  synthetic::write_modelnet_tree(root, 1, 1);
  const auto m = build_split_manifest(scan_layout(root), "modelnet10", 3);
  const auto a = ingest_records(root, m, kDefaultPointCount, 3);
  ASSERT_EQ(a.size(), m.records.size());
  EXPECT_EQ(a.front().cloud.size(), 1024);
  for (const auto& s : a) {
    EXPECT_TRUE(s.cloud.normalized);
    EXPECT_NEAR(s.cloud.points.cast<double>().colwise().norm().maxCoeff(), 1.0, 1e-5);
  }
  // A record's cloud depends on (seed, path) only, not on its position.
  auto reversed = m;
  std::reverse(reversed.records.begin(), reversed.records.end());
  const auto b = ingest_records(root, reversed, kDefaultPointCount, 3);
  EXPECT_EQ(a.front().cloud.points, b.back().cloud.points);
  EXPECT_EQ(a.front().class_index, b.back().class_index);
}

}  // namespace
}  // namespace zslpc
