/*
 * Copyright 2026 The instapop Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "instapop/schema.h"

#include <bit>
#include <cctype>
#include <charconv>
#include <cstdio>

#include "instapop/error.h"
#include "json.hpp"

namespace instapop {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string padded(std::string_view prefix, int value, int width) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%0*d", width, value);
  return std::string(prefix) + buf;
}

FeatureSchema build_canonical() {
  std::vector<ColumnSpec> cols;
  cols.reserve(1566);
  const auto add = [&cols](std::string name, GroupCode g, ColumnKind kind,
                           std::optional<std::uint32_t> card = std::nullopt) {
    cols.push_back({std::move(name), g, kind, card});
  };
  using K = ColumnKind;
  using G = GroupCode;

  // Bag-of-objects counts, one per COCO class.
  for (int i = 0; i < 80; ++i) add(padded("y_", i, 2), G::kY, K::kOrdinal);
  add("iipa", G::kI, K::kContinuous);
  for (int i = 0; i < 1000; ++i) {
    add(padded("e_", i, 4), G::kE, K::kContinuous);
  }
  for (int i = 0; i < 365; ++i) {
    add(padded("p_scn_", i, 3), G::kP, K::kContinuous);
  }
  for (int i = 0; i < 102; ++i) {
    add(padded("p_att_", i, 3), G::kP, K::kContinuous);
  }
  add("p_env", G::kP, K::kContinuous);

  add("a_followers", G::kA, K::kOrdinal);
  add("a_following", G::kA, K::kOrdinal);
  add("a_posts", G::kA, K::kOrdinal);
  add("a_follower_per_post", G::kA, K::kContinuous);
  add("a_follower_per_following", G::kA, K::kContinuous);

  add("c_filter", G::kC, K::kCategorical, 42);
  add("c_users_tagged", G::kC, K::kOrdinal);
  add("c_user_liked", G::kC, K::kCategorical, 2);
  add("c_has_geolocation", G::kC, K::kCategorical, 2);
  add("c_language", G::kC, K::kCategorical, 73);
  add("c_is_english", G::kC, K::kCategorical, 2);
  add("c_hashtag_count", G::kC, K::kOrdinal);
  add("c_word_count", G::kC, K::kOrdinal);
  add("c_body_length", G::kC, K::kOrdinal);

  add("t_day", G::kT, K::kOrdinal);
  add("t_weekday", G::kT, K::kCategorical, 7);
  add("t_hour", G::kT, K::kOrdinal);

  return FeatureSchema(std::move(cols), "likes");
}

}  // namespace

std::optional<GroupCode> group_from_letter(char letter) {
  const char upper = static_cast<char>(
      std::toupper(static_cast<unsigned char>(letter)));
  for (const auto& g : kFeatureGroups) {
    if (g.letter == upper) return g.code;
  }
  return std::nullopt;
}

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kContinuous:
      return "continuous";
    case ColumnKind::kOrdinal:
      return "ordinal";
    case ColumnKind::kCategorical:
      return "categorical";
  }
  return "?";
}

std::optional<ColumnKind> column_kind_from_string(std::string_view text) {
  if (text == "continuous") return ColumnKind::kContinuous;
  if (text == "ordinal") return ColumnKind::kOrdinal;
  if (text == "categorical") return ColumnKind::kCategorical;
  return std::nullopt;
}

FeatureSchema::FeatureSchema(std::vector<ColumnSpec> columns,
                             std::string target_name)
    : columns_(std::move(columns)), target_name_(std::move(target_name)) {
  index_.reserve(columns_.size());
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const ColumnSpec& c = columns_[i];
    if (c.name.empty()) throw InvalidArgument("column name must be non-empty");
    if (c.name == target_name_) {
      throw InvalidArgument("column '" + c.name + "' collides with target");
    }
    if (!index_.emplace(c.name, i).second) {
      throw InvalidArgument("duplicate column name '" + c.name + "'");
    }
    if (c.kind == ColumnKind::kCategorical) {
      if (!c.cardinality || *c.cardinality < 2) {
        throw InvalidArgument("categorical column '" + c.name +
                              "' needs cardinality >= 2");
      }
    } else if (c.cardinality) {
      throw InvalidArgument("non-categorical column '" + c.name +
                            "' carries a cardinality");
    }
    h = fnv1a(h, c.name);
    h = fnv1a(h, std::string_view("\x1f", 1));
    h = fnv1a(h, to_string(c.kind));
    h = fnv1a(h, std::string_view("\x1e", 1));
  }
  hash_ = h;
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureSchema::index_of(std::string_view name) const {
  const auto idx = find(name);
  if (!idx) throw InvalidArgument("unknown column '" + std::string(name) + "'");
  return *idx;
}

int FeatureSchema::group_size(GroupCode g) const {
  int n = 0;
  for (const auto& c : columns_) n += c.group == g;
  return n;
}

std::string FeatureSchema::to_json() const {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kVersion;
  doc["target"] = target_name_;
  doc["schema_hash"] = hash_to_hex(hash_);
  auto& cols = doc["columns"] = nlohmann::ordered_json::array();
  for (const auto& c : columns_) {
    nlohmann::ordered_json col;
    col["name"] = c.name;
    col["group"] = std::string(1, group_letter(c.group));
    col["kind"] = to_string(c.kind);
    if (c.cardinality) col["cardinality"] = *c.cardinality;
    cols.push_back(std::move(col));
  }
  return doc.dump();
}

FeatureSchema FeatureSchema::from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed schema document: ") + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kVersion) {
      throw SchemaMismatch("unsupported schema_version");
    }
    std::vector<ColumnSpec> cols;
    for (const auto& col : doc.at("columns")) {
      const std::string group = col.at("group").get<std::string>();
      const auto g = group.size() == 1 ? group_from_letter(group[0])
                                       : std::nullopt;
      const auto kind =
          column_kind_from_string(col.at("kind").get<std::string>());
      if (!g || !kind) throw SchemaMismatch("bad group or kind in schema");
      std::optional<std::uint32_t> card;
      if (col.contains("cardinality")) {
        card = col.at("cardinality").get<std::uint32_t>();
      }
      cols.push_back({col.at("name").get<std::string>(), *g, *kind, card});
    }
    FeatureSchema schema(std::move(cols), doc.at("target").get<std::string>());
    if (doc.contains("schema_hash") &&
        hash_from_hex(doc.at("schema_hash").get<std::string>()) !=
            schema.hash()) {
      throw SchemaMismatch("schema_hash does not match schema columns");
    }
    return schema;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed schema document: ") + e.what());
  }
}

GroupMask::GroupMask(std::initializer_list<GroupCode> groups) {
  for (GroupCode g : groups) insert(g);
}

GroupMask GroupMask::all() { return GroupMask(std::uint8_t{0x7F}); }

int GroupMask::count() const { return std::popcount(bits_); }

std::string GroupMask::render() const {
  std::string out;
  for (const auto& g : kFeatureGroups) {
    if (contains(g.code)) out.push_back(g.letter);
  }
  return out;
}

GroupMask parse_mask(std::string_view text) {
  if (text.empty()) throw ParseError("empty group mask", 0, '\0');
  GroupMask mask;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto g = group_from_letter(text[i]);
    if (!g) {
      throw ParseError("unknown feature group '" + std::string(1, text[i]) +
                           "' at position " + std::to_string(i),
                       i, text[i]);
    }
    if (mask.contains(*g)) {
      throw ParseError("duplicate feature group '" + std::string(1, text[i]) +
                           "' at position " + std::to_string(i),
                       i, text[i]);
    }
    mask.insert(*g);
  }
  return mask;
}

const FeatureSchema& canonical_schema() {
  static const FeatureSchema schema = build_canonical();
  return schema;
}

FeatureSchema project(const FeatureSchema& schema, GroupMask mask) {
  if (mask.empty()) throw InvalidArgument("group mask must be non-empty");
  std::vector<ColumnSpec> cols;
  for (const auto& c : schema.columns()) {
    if (mask.contains(c.group)) cols.push_back(c);
  }
  return FeatureSchema(std::move(cols), schema.target_name());
}

std::string hash_to_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

std::uint64_t hash_from_hex(std::string_view text) {
  std::uint64_t value = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw SchemaMismatch("malformed schema hash '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace instapop
