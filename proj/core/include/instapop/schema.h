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

#ifndef INSTAPOP_SCHEMA_H_
#define INSTAPOP_SCHEMA_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace instapop {

// The seven feature groups, in canonical rendering order.
enum class GroupCode : std::uint8_t { kY = 0, kI, kE, kP, kA, kC, kT };

inline constexpr int kNumGroups = 7;

struct FeatureGroup {
  GroupCode code;
  char letter;
  std::string_view display_name;
};

inline constexpr std::array<FeatureGroup, kNumGroups> kFeatureGroups = {{
    {GroupCode::kY, 'Y', "YOLOv3"},
    {GroupCode::kI, 'I', "IIPA"},
    {GroupCode::kE, 'E', "EfficientNet"},
    {GroupCode::kP, 'P', "Places365"},
    {GroupCode::kA, 'A', "Author"},
    {GroupCode::kC, 'C', "Content"},
    {GroupCode::kT, 'T', "Temporal"},
}};

inline constexpr int group_index(GroupCode g) { return static_cast<int>(g); }
inline constexpr char group_letter(GroupCode g) {
  return kFeatureGroups[group_index(g)].letter;
}
std::optional<GroupCode> group_from_letter(char letter);

enum class ColumnKind : std::uint8_t { kContinuous, kOrdinal, kCategorical };

std::string_view to_string(ColumnKind kind);
std::optional<ColumnKind> column_kind_from_string(std::string_view text);

struct ColumnSpec {
  std::string name;
  GroupCode group;
  ColumnKind kind;
  // Set for categorical columns only; valid codes are 0..cardinality-1.
  std::optional<std::uint32_t> cardinality;

  bool operator==(const ColumnSpec&) const = default;
};

// Canonical group sizes.
inline constexpr std::array<int, kNumGroups> kCanonicalGroupSizes = {
    80, 1, 1000, 468, 5, 9, 3};

// Immutable ordered list of feature columns plus the target name.
class FeatureSchema {
 public:
  static constexpr int kVersion = 1;

  // Throws InvalidArgument on duplicate names or a categorical column without
  // cardinality >= 2.
  FeatureSchema(std::vector<ColumnSpec> columns, std::string target_name);

  std::size_t size() const { return columns_.size(); }
  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const ColumnSpec& column(std::size_t i) const { return columns_[i]; }
  const std::string& target_name() const { return target_name_; }

  std::optional<std::size_t> find(std::string_view name) const;
  // Throws InvalidArgument naming the column if absent.
  std::size_t index_of(std::string_view name) const;

  int group_size(GroupCode g) const;

  // 64-bit FNV-1a over column names and kinds, in order.
  std::uint64_t hash() const { return hash_; }

  // Versioned JSON document (schema_version = 1).
  std::string to_json() const;
  static FeatureSchema from_json(std::string_view text);

  bool operator==(const FeatureSchema& other) const {
    return target_name_ == other.target_name_ && columns_ == other.columns_;
  }

 private:
  std::vector<ColumnSpec> columns_;
  std::string target_name_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t hash_ = 0;
};

// Non-empty subset of the seven groups.
class GroupMask {
 public:
  GroupMask() = default;
  GroupMask(std::initializer_list<GroupCode> groups);

  static GroupMask all();
  static GroupMask from_bits(std::uint8_t bits) { return GroupMask(bits); }

  bool contains(GroupCode g) const { return (bits_ >> group_index(g)) & 1u; }
  void insert(GroupCode g) { bits_ |= std::uint8_t(1u << group_index(g)); }
  bool empty() const { return bits_ == 0; }
  int count() const;
  std::uint8_t bits() const { return bits_; }

  // Concatenated letters in canonical order, e.g. "YIEPACT".
  std::string render() const;

  GroupMask operator|(GroupMask other) const {
    return GroupMask(std::uint8_t(bits_ | other.bits_));
  }
  bool operator==(const GroupMask&) const = default;

 private:
  explicit GroupMask(std::uint8_t bits) : bits_(bits & 0x7Fu) {}
  std::uint8_t bits_ = 0;
};

// Case-insensitive. Throws ParseError naming the offending character for an
// unknown letter or a duplicate, and for empty text.
GroupMask parse_mask(std::string_view text);

// Full 1566-column schema (1548 visual + iipa + 17 social), target likes.
const FeatureSchema& canonical_schema();

// Columns whose group is in mask, order preserved. Throws InvalidArgument on
// an empty mask.
FeatureSchema project(const FeatureSchema& schema, GroupMask mask);

// Names of the three raw author counts that get log-centred.
inline constexpr std::array<std::string_view, 3> kLogCenteredColumns = {
    "a_followers", "a_following", "a_posts"};

// Lowercase hex rendering used in sidecars and model files.
std::string hash_to_hex(std::uint64_t hash);
std::uint64_t hash_from_hex(std::string_view text);

}  // namespace instapop

#endif  // INSTAPOP_SCHEMA_H_
