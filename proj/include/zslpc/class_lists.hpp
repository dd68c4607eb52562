// SPDX-FileCopyrightText: 2026 The zslpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace zslpc {

inline constexpr std::array<std::string_view, 40> kModelNet40Classes = {
    "airplane", "bathtub", "bed",        "bench",       "bookshelf", "bottle",     "bowl",     "car",
    "chair",    "cone",    "cup",        "curtain",     "desk",      "door",       "dresser",  "flower_pot",
    "glass_box", "guitar", "keyboard",   "lamp",        "laptop",    "mantel",     "monitor",  "night_stand",
    "person",   "piano",   "plant",      "radio",       "range_hood", "sink",      "sofa",     "stairs",
    "stool",    "table",   "tent",       "toilet",      "tv_stand",  "vase",       "wardrobe", "xbox"};

inline constexpr std::array<std::string_view, 10> kModelNet10Classes = {
    "bathtub", "bed", "chair", "desk", "dresser", "monitor", "night_stand", "sofa", "table", "toilet"};

// McGill's 19 categories. The five that name-match a ModelNet40 class
// (airplane, chair, cup, table; human -> person) are removed.
// Mirrored in data/protocols/mcgill.json.
inline constexpr std::array<std::string_view, 19> kMcGillClasses = {
    "airplane", "ant",   "bird",  "chair",   "crab",      "cup",       "dinosaur", "dolphin", "fish",      "four_legged",
    "hand",     "human", "octopus", "plier", "snake",     "spectacle", "spider",   "table",   "teddy_bear"};

inline constexpr std::array<std::string_view, 14> kMcGillUnseenClasses = {
    "ant",  "bird",    "crab",  "dinosaur", "dolphin",   "fish",   "four_legged",
    "hand", "octopus", "plier", "snake",    "spectacle", "spider", "teddy_bear"};

// SHREC2015 retained classes; the other 20 of the 50 either resemble a seen
// class or have no usable word vector. Mirrored in data/protocols/shrec2015.json.
inline constexpr std::array<std::string_view, 30> kShrec2015UnseenClasses = {
    "alien",   "ant",      "armadillo", "camel",  "cat",     "centaur", "chick",   "dinosaur", "dragon", "duck",
    "elephant", "fish",    "flamingo",  "frog",   "giraffe", "glasses", "gorilla", "hand",     "horse",  "kangaroo",
    "mermaid", "mouse",    "octopus",   "pliers", "rabbit",  "robot",   "shark",   "snake",    "spider", "tortoise"};

// Synonyms used when matching class names across datasets.
inline constexpr std::array<std::pair<std::string_view, std::string_view>, 5> kClassAliases = {{
    {"human", "person"}, {"man", "person"}, {"woman", "person"}, {"plane", "airplane"}, {"mug", "cup"}}};

// Lowercase, with ' ' and '-' folded to '_'.
inline std::string canonical_class_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c == ' ' || c == '-') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

inline std::string resolve_alias(std::string_view name) {
  auto canon = canonical_class_name(name);
  for (const auto& [alias, target] : kClassAliases) {
    if (canon == alias) return std::string(target);
  }
  return canon;
}

inline bool class_names_match(std::string_view a, std::string_view b) { return resolve_alias(a) == resolve_alias(b); }

template <typename Range>
std::vector<std::string> to_strings(const Range& r) {
  return std::vector<std::string>(r.begin(), r.end());
}

// The 30 ModelNet40 classes that are not part of ModelNet10, in ModelNet40 order.
inline std::vector<std::string> modelnet_seen_classes() {
  std::vector<std::string> out;
  for (auto c : kModelNet40Classes) {
    if (std::find(kModelNet10Classes.begin(), kModelNet10Classes.end(), c) == kModelNet10Classes.end()) {
      out.emplace_back(c);
    }
  }
  return out;
}

}  // namespace zslpc
