// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zslpc/class_lists.hpp"
#include "zslpc/error.hpp"
#include "zslpc/rng.hpp"

namespace zslpc {

inline constexpr int kWordVectorDim = 300;

enum class SemanticMode { basic, w2v, glove, conc };

inline std::string_view to_string(SemanticMode m) {
  switch (m) {
    case SemanticMode::basic: return "basic";
    case SemanticMode::w2v: return "w2v";
    case SemanticMode::glove: return "glove";
    case SemanticMode::conc: return "conc";
  }
  return "?";
}

inline SemanticMode semantic_mode_from_string(std::string_view s) {
  if (s == "basic") return SemanticMode::basic;
  if (s == "w2v") return SemanticMode::w2v;
  if (s == "glove") return SemanticMode::glove;
  if (s == "conc") return SemanticMode::conc;
  throw UsageError("unknown semantic mode '" + std::string(s) + "'");
}

// Token -> unit-norm vector map loaded from one text file.
class WordVectorStore {
 public:
  WordVectorStore(SemanticMode source, int dim) : source_(source), dim_(dim) {}

  SemanticMode source() const { return source_; }
  int dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::optional<std::span<const float>> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return std::span<const float>(data_.data() + it->second * static_cast<std::size_t>(dim_),
                                  static_cast<std::size_t>(dim_));
  }

  // Renormalizes to unit length; throws on zero vectors and duplicate tokens.
  void add(const std::string& token, std::span<const double> values) {
    if (static_cast<int>(values.size()) != dim_) throw DataError("vector for '" + token + "' has wrong dimension");
    if (index_.count(token)) throw DataError("duplicate token '" + token + "'");
    double norm2 = 0.0;
    for (double v : values) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DataError("zero or non-finite vector for '" + token + "'");
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    for (double v : values) data_.push_back(static_cast<float>(v / norm));
  }

 private:
  SemanticMode source_;
  int dim_;
  std::vector<std::string> tokens_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reads "token v1 ... v_dim" lines. An optional leading "<count> <dim>" line
// (word2vec text export) is skipped. When `vocabulary` is given, only those
// tokens are kept and duplicate detection applies to kept tokens only.
inline WordVectorStore parse_word_vectors(std::istream& in, SemanticMode source, int dim = kWordVectorDim,
                                          const std::unordered_set<std::string>* vocabulary = nullptr) {
  WordVectorStore store(source, dim);
  std::string line;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(dim));
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char* p = line.data();
    const char* end = p + line.size();
    auto skip_ws = [&] {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
    };
    skip_ws();
    if (p == end) continue;
    const char* tok_begin = p;
    while (p < end && *p != ' ' && *p != '\t') ++p;
    std::string token(tok_begin, p);
    // Line 1 is always parsed: it may be a header.
    if (vocabulary && line_no != 1 && !vocabulary->count(token)) continue;
    values.clear();
    while (true) {
      skip_ws();
      if (p == end) break;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (ptr != end && *ptr != ' ' && *ptr != '\t')) {
        throw DataError("line " + std::to_string(line_no) + ": invalid number");
      }
      values.push_back(v);
      p = ptr;
    }
    if (line_no == 1 && values.size() == 1) {
      // "<count> <dim>" header
      continue;
    }
    if (static_cast<int>(values.size()) != dim) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values, got " +
                      std::to_string(values.size()));
    }
    if (vocabulary && !vocabulary->count(token)) continue;
    try {
      store.add(token, values);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

inline WordVectorStore load_word_vectors(const std::filesystem::path& path, SemanticMode source,
                                         int dim = kWordVectorDim,
                                         const std::unordered_set<std::string>* vocabulary = nullptr) {
  if (source != SemanticMode::w2v && source != SemanticMode::glove) {
    throw UsageError("word vector source must be w2v or glove");
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vectors " + path.string());
  try {
    return parse_word_vectors(in, source, dim, vocabulary);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Tokens of a class name: lowercased, split on '_' and ' '.
inline std::vector<std::string> class_name_tokens(std::string_view class_name) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : class_name) {
    if (c == '_' || c == ' ') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// Every token a list of class names needs; used to filter large vector files.
template <typename Range>
std::unordered_set<std::string> vocabulary_for(const Range& class_names) {
  std::unordered_set<std::string> vocab;
  for (const auto& name : class_names) {
    for (auto& t : class_name_tokens(name)) vocab.insert(std::move(t));
  }
  return vocab;
}

// Mean of the constituent token vectors, renormalized to unit length.
inline Eigen::VectorXd class_embedding(const WordVectorStore& store, std::string_view class_name) {
  const auto tokens = class_name_tokens(class_name);
  if (tokens.empty()) throw DataError("empty class name");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(store.dim());
  for (const auto& t : tokens) {
    auto v = store.find(t);
    if (!v) throw DataError("out-of-vocabulary token '" + t + "' in class '" + std::string(class_name) + "'");
    for (int i = 0; i < store.dim(); ++i) sum[i] += (*v)[static_cast<std::size_t>(i)];
  }
  const double norm = sum.norm();
  if (!(norm > 0.0)) throw NumericError("class '" + std::string(class_name) + "' averages to a zero vector");
  return sum / norm;
}

// Ordered class names with one embedding row each (Eˢ or Eᵘ).
struct SemanticEmbeddingTable {
  std::vector<std::string> class_names;
  Eigen::MatrixXd embeddings;  // classes x dim
  SemanticMode mode = SemanticMode::w2v;

  Eigen::Index size() const { return embeddings.rows(); }
  Eigen::Index dim() const { return embeddings.cols(); }
};

inline SemanticEmbeddingTable build_table(const WordVectorStore& store, const std::vector<std::string>& class_names) {
  if (class_names.empty()) throw DataError("cannot build an embedding table with no classes");
  SemanticEmbeddingTable table;
  table.class_names = class_names;
  table.mode = store.source();
  table.embeddings.resize(static_cast<Eigen::Index>(class_names.size()), store.dim());
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    table.embeddings.row(static_cast<Eigen::Index>(i)) = class_embedding(store, class_names[i]).transpose();
  }
  return table;
}

// Row i = [a_i | b_i]; rows keep norm sqrt(2).
inline SemanticEmbeddingTable fuse_tables(const SemanticEmbeddingTable& w2v, const SemanticEmbeddingTable& glove) {
  if (w2v.mode != SemanticMode::w2v || glove.mode != SemanticMode::glove) {
    throw DataError("fusion expects a w2v table followed by a glove table");
  }
  if (w2v.class_names != glove.class_names) throw DataError("fusion requires identical ordered class lists");
  SemanticEmbeddingTable out;
  out.class_names = w2v.class_names;
  out.mode = SemanticMode::conc;
  out.embeddings.resize(w2v.size(), w2v.dim() + glove.dim());
  out.embeddings << w2v.embeddings, glove.embeddings;
  return out;
}

// Fingerprint of (mode, dim, ordered class list), embedded in checkpoints.
inline std::string table_checksum(SemanticMode mode, Eigen::Index dim, const std::vector<std::string>& class_names) {
  std::string key(to_string(mode));
  key += '\n' + std::to_string(dim);
  for (const auto& c : class_names) key += '\n' + canonical_class_name(c);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(key);
  return os.str();
}

inline std::string table_checksum(const SemanticEmbeddingTable& t) {
  return table_checksum(t.mode, t.dim(), t.class_names);
}

}  // namespace zslpc
