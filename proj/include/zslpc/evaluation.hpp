// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "zslpc/error.hpp"
#include "zslpc/semantic_embeddings.hpp"
#include "zslpc/zsl_inference.hpp"

namespace zslpc {

inline double top1_accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& truth) {
  if (predicted.empty()) throw DataError("top-1 accuracy of an empty prediction list");
  if (predicted.size() != truth.size()) throw DataError("prediction and ground-truth lengths differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predicted.size());
}

struct ClassAccuracy {
  std::string class_name;
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::optional<double> percent;  // empty when the class has no samples
};

inline std::vector<ClassAccuracy> per_class_accuracy(const std::vector<std::string>& predicted,
                                                     const std::vector<std::string>& truth,
                                                     const std::vector<std::string>& classes) {
  if (predicted.size() != truth.size()) throw DataError("prediction and ground-truth lengths differ");
  std::vector<ClassAccuracy> out;
  std::map<std::string, std::size_t> slot;
  for (const auto& c : classes) {
    slot.emplace(c, out.size());
    out.push_back({c, 0, 0, std::nullopt});
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto it = slot.find(truth[i]);
    if (it == slot.end()) throw DataError("unknown ground-truth label '" + truth[i] + "'");
    if (!slot.count(predicted[i])) throw DataError("unknown predicted label '" + predicted[i] + "'");
    auto& c = out[it->second];
    ++c.samples;
    if (predicted[i] == truth[i]) ++c.correct;
  }
  for (auto& c : out) {
    if (c.samples > 0) c.percent = 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.samples);
  }
  return out;
}

inline double random_baseline(int unseen_count) {
  if (unseen_count < 1) throw UsageError("random baseline needs at least one unseen class");
  return 100.0 / static_cast<double>(unseen_count);
}

inline const std::vector<int>& default_t_grid() {
  static const std::vector<int> grid = {5, 10, 15, 20, 25, 30};
  return grid;
}

struct SweepPoint {
  int T = 0;
  double accuracy = 0.0;
};

inline std::vector<std::string> predicted_names(const std::vector<ZslPrediction>& predictions,
                                                const SplitManifest& manifest) {
  std::vector<std::string> out;
  for (const auto& p : predictions) out.push_back(manifest.unseen_classes.at(static_cast<std::size_t>(p.predicted())));
  return out;
}

inline std::vector<std::string> true_names(const std::vector<ZslPrediction>& predictions,
                                           const SplitManifest& manifest) {
  std::vector<std::string> out;
  for (const auto& p : predictions) out.push_back(manifest.records.at(p.record).class_name);
  return out;
}

/// One accuracy per T from a single pass of the network.
inline std::vector<SweepPoint> t_sweep(const Checkpoint& ck, const SemanticEmbeddingTable& seen,
                                       const SemanticEmbeddingTable& unseen, const DatasetCache& cache,
                                       const SplitManifest& manifest, const std::vector<int>& t_values) {
  const int S = static_cast<int>(manifest.seen_classes.size());
  for (const int T : t_values) {
    if (T < 1 || T > S) throw UsageError("sweep value T=" + std::to_string(T) + " outside [1, " + std::to_string(S) + "]");
  }
  if (unseen.class_names != manifest.unseen_classes) throw DataError("unseen table rows differ from the manifest");
  std::vector<std::size_t> records;
  const auto probs = unseen_seen_probabilities(cache, manifest, ck, seen, &records);
  std::vector<SweepPoint> out;
  for (const int T : t_values) {
    const auto preds = predict_from_probabilities(probs, records, seen, unseen, T);
    out.push_back({T, top1_accuracy(predicted_names(preds, manifest), true_names(preds, manifest))});
  }
  return out;
}

// ---------------------------------------------------------------- reports

struct EvaluationReport {
  std::string protocol;
  std::string encoder;
  std::string pooling;
  SemanticMode semantics = SemanticMode::w2v;
  double top1 = 0.0;
  std::vector<ClassAccuracy> per_class;
  double random = 0.0;
  int unseen_count = 0;
  int T = 0;
  std::size_t samples = 0;

  std::string method() const { return encoder + "+" + pooling; }
};

inline EvaluationReport make_report(const std::vector<ZslPrediction>& predictions, const SplitManifest& manifest,
                                    std::string encoder, std::string pooling, SemanticMode semantics) {
  if (predictions.empty()) throw DataError("no predictions to report");
  EvaluationReport r;
  r.protocol = manifest.dataset;
  r.encoder = std::move(encoder);
  r.pooling = std::move(pooling);
  r.semantics = semantics;
  const auto pred = predicted_names(predictions, manifest);
  const auto truth = true_names(predictions, manifest);
  r.top1 = top1_accuracy(pred, truth);
  r.per_class = per_class_accuracy(pred, truth, manifest.unseen_classes);
  r.unseen_count = static_cast<int>(manifest.unseen_classes.size());
  r.random = random_baseline(r.unseen_count);
  r.T = predictions.front().T;
  r.samples = predictions.size();
  return r;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"class", c.class_name},
                         {"samples", c.samples},
                         {"correct", c.correct},
                         {"percent", c.percent ? nlohmann::json(*c.percent) : nlohmann::json(nullptr)},
                         {"absent", !c.percent.has_value()}});
  }
  return {{"protocol", r.protocol}, {"encoder", r.encoder},       {"pooling", r.pooling},
          {"semantics", to_string(r.semantics)}, {"top1", r.top1}, {"random", r.random},
          {"unseen_count", r.unseen_count},      {"T", r.T},       {"samples", r.samples},
          {"per_class", per_class}};
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  try {
    EvaluationReport r;
    r.protocol = j.at("protocol").get<std::string>();
    r.encoder = j.at("encoder").get<std::string>();
    r.pooling = j.at("pooling").get<std::string>();
    r.semantics = semantic_mode_from_string(j.at("semantics").get<std::string>());
    r.top1 = j.at("top1").get<double>();
    r.random = j.at("random").get<double>();
    r.unseen_count = j.at("unseen_count").get<int>();
    r.T = j.at("T").get<int>();
    r.samples = j.at("samples").get<std::size_t>();
    for (const auto& c : j.at("per_class")) {
      ClassAccuracy a{c.at("class").get<std::string>(), c.at("samples").get<std::size_t>(),
                      c.at("correct").get<std::size_t>(), std::nullopt};
      if (!c.at("percent").is_null()) a.percent = c.at("percent").get<double>();
      r.per_class.push_back(std::move(a));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation report: ") + e.what());
  }
}

enum class ReportFormat { csv, json };

inline constexpr SemanticMode kReportColumns[] = {SemanticMode::basic, SemanticMode::w2v, SemanticMode::glove,
                                                  SemanticMode::conc};

inline std::string report_file_name(std::string_view protocol, std::string_view encoder, std::string_view pooling,
                                    ReportFormat format) {
  return fmt::format("{}_{}_{}.{}", protocol, encoder, pooling, format == ReportFormat::csv ? "csv" : "json");
}

/// One row per (protocol, method) with cells basic, w2v, glove, conc, then
/// one Random row per protocol. Reports sharing a row must agree on the
/// protocol's unseen class count, and each cell may be filled only once.
inline std::string emit_report(const std::vector<EvaluationReport>& reports, ReportFormat format,
                               const nlohmann::json& config = nullptr) {
  if (reports.empty()) throw DataError("cannot emit an empty report");
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::map<SemanticMode, const EvaluationReport*>> rows;
  std::map<std::string, int> unseen_count;
  std::vector<std::string> protocols;
  for (const auto& r : reports) {
    auto [it, fresh] = unseen_count.emplace(r.protocol, r.unseen_count);
    if (fresh) protocols.push_back(r.protocol);
    auto& row = rows[{r.protocol, r.method()}];
    for (const auto& [mode, other] : row) {
      if (other->unseen_count != r.unseen_count || it->second != r.unseen_count) {
        throw DataError("row " + r.method() + " mixes protocols (" + std::to_string(other->unseen_count) + " vs " +
                        std::to_string(r.unseen_count) + " unseen classes)");
      }
    }
    if (it->second != r.unseen_count) throw DataError("protocol " + r.protocol + " mixes unseen class counts");
    if (!row.emplace(r.semantics, &r).second) {
      throw DataError("duplicate cell " + r.protocol + "/" + r.method() + "/" + std::string(to_string(r.semantics)));
    }
  }
  std::sort(protocols.begin(), protocols.end());

  if (format == ReportFormat::json) {
    nlohmann::json doc;
    if (!config.is_null()) doc["config"] = config;
    auto& out_rows = doc["rows"] = nlohmann::json::array();
    for (const auto& p : protocols) {
      for (const auto& [key, cells] : rows) {
        if (key.first != p) continue;
        nlohmann::json row = {{"protocol", p}, {"method", key.second}};
        for (const auto mode : kReportColumns) {
          const auto c = cells.find(mode);
          row[std::string(to_string(mode))] = c == cells.end() ? nlohmann::json(nullptr) : nlohmann::json(c->second->top1);
        }
        out_rows.push_back(std::move(row));
      }
      nlohmann::json random_row = {{"protocol", p}, {"method", "Random"}};
      for (const auto mode : kReportColumns) random_row[std::string(to_string(mode))] = random_baseline(unseen_count[p]);
      out_rows.push_back(std::move(random_row));
    }
    return doc.dump(2) + "\n";
  }

  std::ostringstream out;
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "protocol,method,basic,w2v,glove,conc\n";
  for (const auto& p : protocols) {
    for (const auto& [key, cells] : rows) {
      if (key.first != p) continue;
      out << p << ',' << key.second;
      for (const auto mode : kReportColumns) {
        const auto c = cells.find(mode);
        out << ',';
        if (c != cells.end()) out << fmt::format("{:.1f}", c->second->top1);
      }
      out << '\n';
    }
    const auto r = fmt::format("{:.1f}", random_baseline(unseen_count[p]));
    out << p << ",Random," << r << ',' << r << ',' << r << ',' << r << '\n';
  }
  return out.str();
}

/// Per-class accuracy series; classes without samples get a blank percent.
inline std::string per_class_csv(const EvaluationReport& r, const nlohmann::json& config = nullptr) {
  std::ostringstream out;
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "class,samples,correct,percent\n";
  for (const auto& c : r.per_class) {
    out << c.class_name << ',' << c.samples << ',' << c.correct << ',';
    if (c.percent) out << fmt::format("{:.1f}", *c.percent);
    out << '\n';
  }
  return out.str();
}

inline std::string sweep_csv(const std::vector<SweepPoint>& sweep, const nlohmann::json& config = nullptr) {
  std::ostringstream out;
  if (!config.is_null()) out << "# config: " << config.dump() << '\n';
  out << "T,accuracy\n";
  for (const auto& s : sweep) out << s.T << ',' << fmt::format("{:.1f}", s.accuracy) << '\n';
  return out.str();
}

}  // namespace zslpc
