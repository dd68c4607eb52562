// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "zslpc/error.hpp"

namespace zslpc {

enum class MeshFormat { off, ply };

struct TriangleMesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
};

enum class MeshErrorCode { malformed_header, bad_number, index_out_of_range, count_mismatch, unsupported };

class MeshParseError : public ParseError {
 public:
  MeshParseError(MeshErrorCode code, const std::string& what, std::size_t offset)
      : ParseError(what, offset), code_(code) {}
  MeshErrorCode code() const noexcept { return code_; }

 private:
  MeshErrorCode code_;
};

namespace detail {

// Line-oriented reader that remembers the byte offset of every line.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Next line with content; '#' starts a comment when skip_comments is set.
  std::optional<std::string_view> next(bool skip_comments = true) {
    while (pos_ < text_.size()) {
      line_offset_ = pos_;
      auto end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      auto line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      if (skip_comments) {
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      }
      if (!trim(line).empty()) return trim(line);
    }
    line_offset_ = text_.size();
    return std::nullopt;
  }

  std::size_t line_offset() const { return line_offset_; }
  std::size_t end_offset() const { return text_.size(); }

  static std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_offset_ = 0;
};

inline std::vector<std::pair<std::string_view, std::size_t>> split_tokens(std::string_view line) {
  std::vector<std::pair<std::string_view, std::size_t>> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const auto start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.emplace_back(line.substr(start, i - start), start);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view token, std::size_t offset) {
  T value{};
  auto first = token.data();
  if (!token.empty() && token.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw MeshParseError(MeshErrorCode::bad_number, "invalid number '" + std::string(token) + "'", offset);
  }
  return value;
}

inline void add_polygon(TriangleMesh& mesh, const std::vector<std::uint32_t>& poly) {
  for (std::size_t j = 1; j + 1 < poly.size(); ++j) mesh.faces.push_back({poly[0], poly[j], poly[j + 1]});
}

inline std::uint32_t checked_index(std::string_view token, std::size_t offset, std::size_t vertex_count) {
  const auto idx = parse_number<std::int64_t>(token, offset);
  if (idx < 0 || static_cast<std::size_t>(idx) >= vertex_count) {
    throw MeshParseError(MeshErrorCode::index_out_of_range,
                         "face index " + std::to_string(idx) + " outside [0, " + std::to_string(vertex_count) + ")",
                         offset);
  }
  return static_cast<std::uint32_t>(idx);
}

inline TriangleMesh parse_off(std::string_view text) {
  LineReader reader(text);
  auto first = reader.next();
  if (!first || first->substr(0, 3) != "OFF") {
    throw MeshParseError(MeshErrorCode::malformed_header, "missing OFF magic", reader.line_offset());
  }
  // Some ModelNet files glue the counts onto the magic: "OFF490 518 0".
  std::string_view counts_line = LineReader::trim(first->substr(3));
  std::size_t counts_offset = reader.line_offset() + 3;
  if (counts_line.empty()) {
    auto line = reader.next();
    if (!line) throw MeshParseError(MeshErrorCode::malformed_header, "missing OFF counts", reader.line_offset());
    counts_line = *line;
    counts_offset = reader.line_offset();
  }
  const auto counts = split_tokens(counts_line);
  if (counts.size() < 2 || counts.size() > 3) {
    throw MeshParseError(MeshErrorCode::malformed_header, "OFF counts line must hold 2 or 3 integers", counts_offset);
  }
  const auto nv = parse_number<std::int64_t>(counts[0].first, counts_offset + counts[0].second);
  const auto nf = parse_number<std::int64_t>(counts[1].first, counts_offset + counts[1].second);
  if (nv < 0 || nf < 0) throw MeshParseError(MeshErrorCode::malformed_header, "negative element count", counts_offset);

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (std::int64_t v = 0; v < nv; ++v) {
    auto line = reader.next();
    if (!line) {
      throw MeshParseError(MeshErrorCode::count_mismatch,
                           "declared " + std::to_string(nv) + " vertices, found " + std::to_string(v),
                           reader.end_offset());
    }
    const auto tokens = split_tokens(*line);
    if (tokens.size() < 3) {
      throw MeshParseError(MeshErrorCode::malformed_header, "vertex line needs 3 coordinates", reader.line_offset());
    }
    std::array<double, 3> p{};
    for (int c = 0; c < 3; ++c) p[c] = parse_number<double>(tokens[c].first, reader.line_offset() + tokens[c].second);
    mesh.vertices.push_back(p);
  }
  std::vector<std::uint32_t> poly;
  for (std::int64_t f = 0; f < nf; ++f) {
    auto line = reader.next();
    if (!line) {
      throw MeshParseError(MeshErrorCode::count_mismatch,
                           "declared " + std::to_string(nf) + " faces, found " + std::to_string(f),
                           reader.end_offset());
    }
    const auto off = reader.line_offset();
    const auto tokens = split_tokens(*line);
    const auto k = parse_number<std::int64_t>(tokens[0].first, off + tokens[0].second);
    if (k < 3 || static_cast<std::size_t>(k) + 1 > tokens.size()) {
      throw MeshParseError(MeshErrorCode::count_mismatch, "face declares " + std::to_string(k) + " indices", off);
    }
    poly.clear();
    for (std::int64_t j = 1; j <= k; ++j) {
      poly.push_back(checked_index(tokens[j].first, off + tokens[j].second, mesh.vertices.size()));
    }
    add_polygon(mesh, poly);
  }
  if (reader.next()) {
    throw MeshParseError(MeshErrorCode::count_mismatch, "data beyond the declared element counts",
                         reader.line_offset());
  }
  return mesh;
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  std::int64_t count = 0;
  std::vector<PlyProperty> properties;
};

inline TriangleMesh parse_ply(std::string_view text) {
  LineReader reader(text);
  auto magic = reader.next(false);
  if (!magic || *magic != "ply") {
    throw MeshParseError(MeshErrorCode::malformed_header, "missing ply magic", reader.line_offset());
  }
  std::vector<PlyElement> elements;
  bool have_format = false;
  bool header_done = false;
  while (auto line = reader.next(false)) {
    const auto off = reader.line_offset();
    const auto tokens = split_tokens(*line);
    const auto key = tokens[0].first;
    if (key == "comment" || key == "obj_info") continue;
    if (key == "end_header") {
      header_done = true;
      break;
    }
    if (key == "format") {
      if (tokens.size() < 2) throw MeshParseError(MeshErrorCode::malformed_header, "bad format line", off);
      if (tokens[1].first != "ascii") {
        throw MeshParseError(MeshErrorCode::unsupported,
                             "only ascii PLY is supported, got '" + std::string(tokens[1].first) + "'", off);
      }
      have_format = true;
    } else if (key == "element") {
      if (tokens.size() != 3) throw MeshParseError(MeshErrorCode::malformed_header, "bad element line", off);
      PlyElement e;
      e.name = std::string(tokens[1].first);
      e.count = parse_number<std::int64_t>(tokens[2].first, off + tokens[2].second);
      if (e.count < 0) throw MeshParseError(MeshErrorCode::malformed_header, "negative element count", off);
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw MeshParseError(MeshErrorCode::malformed_header, "property before element", off);
      PlyProperty p;
      if (tokens.size() >= 2 && tokens[1].first == "list") {
        if (tokens.size() != 5) throw MeshParseError(MeshErrorCode::malformed_header, "bad list property", off);
        p.is_list = true;
        p.name = std::string(tokens[4].first);
      } else {
        if (tokens.size() != 3) throw MeshParseError(MeshErrorCode::malformed_header, "bad property line", off);
        p.name = std::string(tokens[2].first);
      }
      elements.back().properties.push_back(std::move(p));
    } else {
      throw MeshParseError(MeshErrorCode::malformed_header, "unknown header keyword '" + std::string(key) + "'", off);
    }
  }
  if (!header_done) throw MeshParseError(MeshErrorCode::malformed_header, "missing end_header", reader.end_offset());
  if (!have_format) throw MeshParseError(MeshErrorCode::malformed_header, "missing format line", 0);

  TriangleMesh mesh;
  bool saw_vertex = false;
  for (const auto& element : elements) {
    int xi = -1, yi = -1, zi = -1, fi = -1;
    for (int i = 0; i < static_cast<int>(element.properties.size()); ++i) {
      const auto& name = element.properties[i].name;
      if (name == "x") xi = i;
      if (name == "y") yi = i;
      if (name == "z") zi = i;
      if (element.properties[i].is_list && (name == "vertex_indices" || name == "vertex_index")) fi = i;
    }
    const bool is_vertex = element.name == "vertex";
    const bool is_face = element.name == "face";
    if (is_vertex && (xi < 0 || yi < 0 || zi < 0)) {
      throw MeshParseError(MeshErrorCode::malformed_header, "vertex element lacks x/y/z", 0);
    }
    if (is_face && fi < 0) throw MeshParseError(MeshErrorCode::malformed_header, "face element lacks vertex_indices", 0);
    if (is_face && !saw_vertex) throw MeshParseError(MeshErrorCode::malformed_header, "face element before vertex", 0);
    std::vector<std::uint32_t> poly;
    for (std::int64_t r = 0; r < element.count; ++r) {
      auto line = reader.next(false);
      if (!line) {
        throw MeshParseError(MeshErrorCode::count_mismatch,
                             "declared " + std::to_string(element.count) + " " + element.name + " records, found " +
                                 std::to_string(r),
                             reader.end_offset());
      }
      const auto off = reader.line_offset();
      const auto tokens = split_tokens(*line);
      std::size_t t = 0;
      std::array<double, 3> p{};
      for (int i = 0; i < static_cast<int>(element.properties.size()); ++i) {
        if (t >= tokens.size()) throw MeshParseError(MeshErrorCode::count_mismatch, "record too short", off);
        if (element.properties[i].is_list) {
          const auto k = parse_number<std::int64_t>(tokens[t].first, off + tokens[t].second);
          ++t;
          if (k < 0 || t + static_cast<std::size_t>(k) > tokens.size()) {
            throw MeshParseError(MeshErrorCode::count_mismatch, "list declares " + std::to_string(k) + " items", off);
          }
          if (i == fi) {
            if (k < 3) throw MeshParseError(MeshErrorCode::count_mismatch, "face with fewer than 3 indices", off);
            poly.clear();
            for (std::int64_t j = 0; j < k; ++j) {
              poly.push_back(checked_index(tokens[t + j].first, off + tokens[t + j].second, mesh.vertices.size()));
            }
            add_polygon(mesh, poly);
          }
          t += static_cast<std::size_t>(k);
        } else {
          if (is_vertex && (i == xi || i == yi || i == zi)) {
            const int axis = i == xi ? 0 : (i == yi ? 1 : 2);
            p[axis] = parse_number<double>(tokens[t].first, off + tokens[t].second);
          }
          ++t;
        }
      }
      if (t != tokens.size()) throw MeshParseError(MeshErrorCode::count_mismatch, "record too long", off);
      if (is_vertex) mesh.vertices.push_back(p);
    }
    if (is_vertex) saw_vertex = true;
  }
  if (reader.next(false)) {
    throw MeshParseError(MeshErrorCode::count_mismatch, "data beyond the declared element counts",
                         reader.line_offset());
  }
  return mesh;
}

}  // namespace detail

// Parses an ASCII OFF or PLY mesh; polygons are fan-triangulated.
inline TriangleMesh parse_mesh(std::string_view bytes, MeshFormat format) {
  return format == MeshFormat::off ? detail::parse_off(bytes) : detail::parse_ply(bytes);
}

inline std::optional<MeshFormat> mesh_format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".off") return MeshFormat::off;
  if (ext == ".ply") return MeshFormat::ply;
  return std::nullopt;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TriangleMesh load_mesh(const std::filesystem::path& path) {
  const auto format = mesh_format_from_path(path);
  if (!format) throw DataError("unrecognized mesh extension: " + path.string());
  const auto bytes = read_file_bytes(path);
  try {
    return parse_mesh(bytes, *format);
  } catch (const MeshParseError& e) {
    throw MeshParseError(e.code(), path.string() + ": " + e.message(), e.offset());
  }
}

}  // namespace zslpc
