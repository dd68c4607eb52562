// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "zslpc/class_lists.hpp"
#include "zslpc/error.hpp"
#include "zslpc/mesh.hpp"
#include "zslpc/rng.hpp"

namespace zslpc {

// Dataset directory names recognised under a data root.
inline constexpr std::string_view kModelNet40 = "ModelNet40";
inline constexpr std::string_view kModelNet10 = "ModelNet10";
inline constexpr std::string_view kMcGill = "McGill";
inline constexpr std::string_view kShrec2015 = "SHREC2015";

struct LayoutEntry {
  std::string dataset;     // one of the names above
  std::string class_name;  // as found on disk
  std::string split;       // "train", "test", or empty when the dataset has no split
  std::string path;        // relative to the data root
};

// A listing of every sample file with its class; the input to manifest building.
struct DatasetLayout {
  std::vector<LayoutEntry> entries;
};

enum class SampleRole { train_seen, test_seen, test_unseen };

inline std::string_view to_string(SampleRole role) {
  switch (role) {
    case SampleRole::train_seen: return "train-seen";
    case SampleRole::test_seen: return "test-seen";
    case SampleRole::test_unseen: return "test-unseen";
  }
  return "?";
}

inline SampleRole role_from_string(std::string_view s) {
  if (s == "train-seen") return SampleRole::train_seen;
  if (s == "test-seen") return SampleRole::test_seen;
  if (s == "test-unseen") return SampleRole::test_unseen;
  throw DataError("unknown sample role '" + std::string(s) + "'");
}

struct SampleRecord {
  std::string path;
  std::string class_name;
  SampleRole role;
};

struct ExcludedSample {
  std::string path;
  std::string reason;
};

struct SplitManifest {
  std::string dataset;
  std::vector<std::string> seen_classes;
  std::vector<std::string> unseen_classes;
  std::vector<SampleRecord> records;
  std::vector<ExcludedSample> excluded;
  std::uint64_t seed = 0;
  nlohmann::json config;  // effective run configuration, echoed for provenance

  std::size_t count(SampleRole role) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const SampleRecord& r) { return r.role == role; }));
  }

  // Index into seen_classes ++ unseen_classes, the cache class table.
  std::vector<std::string> class_table() const {
    auto table = seen_classes;
    table.insert(table.end(), unseen_classes.begin(), unseen_classes.end());
    return table;
  }
};

enum class UnseenSelection { modelnet10_test, last_third, random_quarter };

struct ProtocolDefinition {
  std::string id;
  std::vector<std::string> seen_classes;
  std::vector<std::string> unseen_classes;
  std::string unseen_dataset;
  UnseenSelection selection = UnseenSelection::modelnet10_test;
};

inline ProtocolDefinition protocol_by_name(std::string_view name) {
  ProtocolDefinition p;
  p.seen_classes = modelnet_seen_classes();
  if (name == "modelnet10" || name == "modelnet") {
    p.id = "modelnet10";
    p.unseen_classes = to_strings(kModelNet10Classes);
    p.unseen_dataset = kModelNet10;
    p.selection = UnseenSelection::modelnet10_test;
  } else if (name == "mcgill") {
    p.id = "mcgill";
    p.unseen_classes = to_strings(kMcGillUnseenClasses);
    p.unseen_dataset = kMcGill;
    p.selection = UnseenSelection::last_third;
  } else if (name == "shrec2015" || name == "shrec") {
    p.id = "shrec2015";
    p.unseen_classes = to_strings(kShrec2015UnseenClasses);
    p.unseen_dataset = kShrec2015;
    p.selection = UnseenSelection::random_quarter;
  } else {
    throw UsageError("unknown split protocol '" + std::string(name) + "'");
  }
  return p;
}

namespace detail {

inline void check_disjoint(const std::vector<std::string>& seen, const std::vector<std::string>& unseen) {
  for (const auto& u : unseen) {
    for (const auto& s : seen) {
      if (canonical_class_name(u) == canonical_class_name(s)) {
        throw DataError("class '" + u + "' is listed as both seen and unseen");
      }
    }
  }
  std::set<std::string> names;
  for (const auto& c : seen) {
    if (!names.insert(canonical_class_name(c)).second) throw DataError("duplicate class '" + c + "'");
  }
  for (const auto& c : unseen) {
    if (!names.insert(canonical_class_name(c)).second) throw DataError("duplicate class '" + c + "'");
  }
}

inline std::optional<std::string> find_class(const std::vector<std::string>& list, std::string_view name) {
  const auto canon = canonical_class_name(name);
  for (const auto& c : list) {
    if (canonical_class_name(c) == canon) return c;
  }
  return std::nullopt;
}

}  // namespace detail

// Checks disjointness, class membership, role consistency and that every
// listed class has at least one record.
inline void validate_manifest(const SplitManifest& m) {
  detail::check_disjoint(m.seen_classes, m.unseen_classes);
  std::map<std::string, std::size_t> per_class;
  for (const auto& r : m.records) {
    const bool is_seen = detail::find_class(m.seen_classes, r.class_name).has_value();
    const bool is_unseen = detail::find_class(m.unseen_classes, r.class_name).has_value();
    if (is_seen == is_unseen) throw DataError("record " + r.path + " has class '" + r.class_name + "' outside the split");
    if ((r.role == SampleRole::test_unseen) != is_unseen) {
      throw DataError("record " + r.path + " has role " + std::string(to_string(r.role)) + " but class '" +
                      r.class_name + "' is " + (is_seen ? "seen" : "unseen"));
    }
    ++per_class[canonical_class_name(r.class_name)];
  }
  for (const auto* list : {&m.seen_classes, &m.unseen_classes}) {
    for (const auto& c : *list) {
      if (per_class[canonical_class_name(c)] == 0) throw DataError("class '" + c + "' has zero samples");
    }
  }
}

inline SplitManifest build_split_manifest(const DatasetLayout& layout, const ProtocolDefinition& protocol,
                                          std::uint64_t seed) {
  detail::check_disjoint(protocol.seen_classes, protocol.unseen_classes);
  SplitManifest m;
  m.dataset = protocol.id;
  m.seen_classes = protocol.seen_classes;
  m.unseen_classes = protocol.unseen_classes;
  m.seed = seed;

  // Unseen candidates are grouped per class, then selected by the protocol rule.
  std::map<std::string, std::vector<const LayoutEntry*>> unseen_pool;
  for (const auto& e : layout.entries) {
    if (e.dataset == kModelNet40) {
      if (auto c = detail::find_class(m.seen_classes, e.class_name)) {
        if (e.split != "train" && e.split != "test") throw DataError("ModelNet40 entry without split: " + e.path);
        m.records.push_back({e.path, *c, e.split == "train" ? SampleRole::train_seen : SampleRole::test_seen});
      } else {
        m.excluded.push_back({e.path, "not a seen class"});
      }
    } else if (e.dataset == protocol.unseen_dataset) {
      if (auto c = detail::find_class(m.unseen_classes, e.class_name)) {
        unseen_pool[*c].push_back(&e);
      } else {
        m.excluded.push_back({e.path, "class not retained by the protocol"});
      }
    } else {
      m.excluded.push_back({e.path, "dataset not part of the protocol"});
    }
  }

  for (const auto& cls : m.unseen_classes) {
    auto& pool = unseen_pool[cls];
    std::sort(pool.begin(), pool.end(), [](const auto* a, const auto* b) { return a->path < b->path; });
    std::vector<bool> chosen(pool.size(), false);
    switch (protocol.selection) {
      case UnseenSelection::modelnet10_test:
        for (std::size_t i = 0; i < pool.size(); ++i) chosen[i] = pool[i]->split == "test";
        break;
      case UnseenSelection::last_third: {
        const std::size_t take = (pool.size() + 2) / 3;
        for (std::size_t i = pool.size() - take; i < pool.size(); ++i) chosen[i] = true;
        break;
      }
      case UnseenSelection::random_quarter: {
        if (pool.empty()) break;
        std::vector<std::size_t> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(seed, cls));
        shuffle(order.begin(), order.end(), rng);
        const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.25 * pool.size())));
        for (std::size_t i = 0; i < take; ++i) chosen[order[i]] = true;
        break;
      }
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (chosen[i]) {
        m.records.push_back({pool[i]->path, cls, SampleRole::test_unseen});
      } else {
        m.excluded.push_back({pool[i]->path, "unseen instance outside the test selection"});
      }
    }
  }
  validate_manifest(m);
  return m;
}

inline SplitManifest build_split_manifest(const DatasetLayout& layout, std::string_view protocol, std::uint64_t seed) {
  return build_split_manifest(layout, protocol_by_name(protocol), seed);
}

// Scans <root>/<Dataset>/<class>/[train|test/]<file>.{off,ply} for the
// four known dataset directories; entries are sorted by path.
inline DatasetLayout scan_layout(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("data root is not a directory: " + root.string());
  DatasetLayout layout;
  for (auto dataset : {kModelNet40, kModelNet10, kMcGill, kShrec2015}) {
    const auto dir = root / dataset;
    if (!fs::is_directory(dir)) continue;
    for (const auto& class_dir : fs::directory_iterator(dir)) {
      if (!class_dir.is_directory()) continue;
      const auto cls = class_dir.path().filename().string();
      for (const auto& f : fs::recursive_directory_iterator(class_dir.path())) {
        if (!f.is_regular_file() || !mesh_format_from_path(f.path())) continue;
        const auto rel = fs::relative(f.path(), root).generic_string();
        const auto parent = f.path().parent_path().filename().string();
        std::string split;
        if (parent == "train" || parent == "test") split = parent;
        layout.entries.push_back({std::string(dataset), cls, split, rel});
      }
    }
  }
  std::sort(layout.entries.begin(), layout.entries.end(),
            [](const LayoutEntry& a, const LayoutEntry& b) { return a.path < b.path; });
  return layout;
}

inline nlohmann::json to_json(const SplitManifest& m) {
  nlohmann::json j;
  j["dataset"] = m.dataset;
  j["seen_classes"] = m.seen_classes;
  j["unseen_classes"] = m.unseen_classes;
  j["seed"] = m.seed;
  auto& records = j["records"] = nlohmann::json::array();
  for (const auto& r : m.records) {
    records.push_back({{"path", r.path}, {"class", r.class_name}, {"role", to_string(r.role)}});
  }
  auto& excluded = j["excluded"] = nlohmann::json::array();
  for (const auto& e : m.excluded) excluded.push_back({{"path", e.path}, {"reason", e.reason}});
  if (!m.config.is_null()) j["config"] = m.config;
  return j;
}

inline SplitManifest manifest_from_json(const nlohmann::json& j) {
  try {
    SplitManifest m;
    m.dataset = j.at("dataset").get<std::string>();
    m.seen_classes = j.at("seen_classes").get<std::vector<std::string>>();
    m.unseen_classes = j.at("unseen_classes").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("records")) {
      m.records.push_back({r.at("path").get<std::string>(), r.at("class").get<std::string>(),
                           role_from_string(r.at("role").get<std::string>())});
    }
    if (j.contains("excluded")) {
      for (const auto& e : j.at("excluded")) {
        m.excluded.push_back({e.at("path").get<std::string>(), e.at("reason").get<std::string>()});
      }
    }
    if (j.contains("config")) m.config = j.at("config");
    validate_manifest(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

inline void write_manifest(const SplitManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline SplitManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace zslpc
