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

#include <gtest/gtest.h>

#include <set>

#include "instapop/error.h"
#include "instapop/rng.h"

namespace instapop {
namespace {

TEST(CanonicalSchema, GroupSizesMatchTaxonomy) {
  const FeatureSchema& s = canonical_schema();
  EXPECT_EQ(s.size(), 1566u);
  EXPECT_EQ(s.target_name(), "likes");
  for (const auto& g : kFeatureGroups) {
    EXPECT_EQ(s.group_size(g.code), kCanonicalGroupSizes[group_index(g.code)])
        << g.letter;
  }
}

TEST(CanonicalSchema, EfficientNetColumnsAreNamedInOrder) {
  const FeatureSchema& s = canonical_schema();
  const std::size_t first = s.index_of("e_0000");
  for (int i = 0; i < 1000; ++i) {
    char name[8];
    std::snprintf(name, sizeof(name), "e_%04d", i);
    const ColumnSpec& c = s.column(first + i);
    EXPECT_EQ(c.name, name);
    EXPECT_EQ(c.group, GroupCode::kE);
  }
}

TEST(CanonicalSchema, ObjectCountsAreOrdinal) {
  const FeatureSchema& s = canonical_schema();
  int n = 0;
  for (const ColumnSpec& c : s.columns()) {
    if (c.group != GroupCode::kY) continue;
    EXPECT_EQ(c.kind, ColumnKind::kOrdinal) << c.name;
    ++n;
  }
  EXPECT_EQ(n, 80);
  EXPECT_EQ(s.column(s.index_of("y_00")).group, GroupCode::kY);
  EXPECT_EQ(s.column(s.index_of("y_79")).group, GroupCode::kY);
}

TEST(CanonicalSchema, SingleIipaColumn) {
  const FeatureSchema& s = canonical_schema();
  const ColumnSpec& c = s.column(s.index_of("iipa"));
  EXPECT_EQ(c.group, GroupCode::kI);
  EXPECT_EQ(c.kind, ColumnKind::kContinuous);
}

TEST(CanonicalSchema, CategoricalColumnsCarryCardinality) {
  for (const ColumnSpec& c : canonical_schema().columns()) {
    if (c.kind == ColumnKind::kCategorical) {
      ASSERT_TRUE(c.cardinality.has_value()) << c.name;
      EXPECT_GE(*c.cardinality, 2u);
    } else {
      EXPECT_FALSE(c.cardinality.has_value()) << c.name;
    }
  }
  const FeatureSchema& s = canonical_schema();
  EXPECT_EQ(s.column(s.index_of("c_filter")).cardinality, 42u);
}

TEST(FeatureSchema, RejectsDuplicatesAndBadCardinality) {
  using C = ColumnSpec;
  EXPECT_THROW(FeatureSchema({C{"a", GroupCode::kA, ColumnKind::kOrdinal, {}},
                              C{"a", GroupCode::kC, ColumnKind::kOrdinal, {}}},
                             "likes"),
               InvalidArgument);
  EXPECT_THROW(
      FeatureSchema({C{"a", GroupCode::kC, ColumnKind::kCategorical, 1u}}, "y"),
      InvalidArgument);
  EXPECT_THROW(
      FeatureSchema({C{"a", GroupCode::kC, ColumnKind::kCategorical, {}}}, "y"),
      InvalidArgument);
}

TEST(FeatureSchema, IndexOfNamesMissingColumn) {
  try {
    canonical_schema().index_of("nope");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
}

TEST(FeatureSchema, JsonRoundTrip) {
  const FeatureSchema& s = canonical_schema();
  const FeatureSchema back = FeatureSchema::from_json(s.to_json());
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.hash(), s.hash());
  EXPECT_EQ(hash_from_hex(hash_to_hex(s.hash())), s.hash());
}

TEST(Project, AuthorContentTemporalHasSeventeenColumns) {
  const FeatureSchema p = project(canonical_schema(), parse_mask("ACT"));
  EXPECT_EQ(p.size(), 17u);
  EXPECT_NE(p.hash(), canonical_schema().hash());
}

TEST(Project, FullMaskIsIdentity) {
  const FeatureSchema p = project(canonical_schema(), GroupMask::all());
  EXPECT_EQ(p, canonical_schema());
  EXPECT_EQ(p.hash(), canonical_schema().hash());
}

TEST(Project, SingletonIipa) {
  const FeatureSchema p = project(canonical_schema(), GroupMask{GroupCode::kI});
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p.column(0).name, "iipa");
}

TEST(Project, EmptyMaskThrows) {
  EXPECT_THROW(project(canonical_schema(), GroupMask{}), InvalidArgument);
}

TEST(Project, PreservesOrder) {
  const FeatureSchema& s = canonical_schema();
  const FeatureSchema p = project(s, parse_mask("YPT"));
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::size_t at = s.index_of(p.column(i).name);
    if (i > 0) {
      EXPECT_GT(at, last);
    }
    last = at;
  }
}

TEST(ProjectProperty, UnionOfMasksIsUnionOfColumns) {
  const FeatureSchema& s = canonical_schema();
  SeqRng rng(11, 0);
  for (int trial = 0; trial < 60; ++trial) {
    const auto m1 = GroupMask::from_bits(1 + rng.below(127));
    const auto m2 = GroupMask::from_bits(1 + rng.below(127));
    const FeatureSchema p1 = project(s, m1);
    const FeatureSchema p2 = project(s, m2);
    const FeatureSchema both = project(s, m1 | m2);
    std::set<std::string> expected;
    for (const auto& c : p1.columns()) expected.insert(c.name);
    for (const auto& c : p2.columns()) expected.insert(c.name);
    std::set<std::string> got;
    for (const auto& c : both.columns()) got.insert(c.name);
    EXPECT_EQ(got, expected) << m1.render() << " | " << m2.render();
  }
}

TEST(ParseMask, Examples) {
  EXPECT_EQ(parse_mask("ACT"),
            (GroupMask{GroupCode::kA, GroupCode::kC, GroupCode::kT}));
  EXPECT_EQ(parse_mask("yiepact"), GroupMask::all());
  EXPECT_EQ(parse_mask("TCA").render(), "ACT");
}

TEST(ParseMask, ErrorNamesOffendingLetter) {
  try {
    parse_mask("AXT");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offending(), 'X');
    EXPECT_EQ(e.position(), 1u);
  }
  EXPECT_THROW(parse_mask(""), ParseError);
  EXPECT_THROW(parse_mask("AA"), ParseError);
  EXPECT_THROW(parse_mask("Q"), ParseError);
}

TEST(ParseMaskProperty, RenderRoundTripsAllSubsets) {
  for (unsigned bits = 1; bits < 128; ++bits) {
    const auto m = GroupMask::from_bits(static_cast<std::uint8_t>(bits));
    EXPECT_EQ(parse_mask(m.render()), m) << bits;
    EXPECT_EQ(static_cast<int>(m.render().size()), m.count());
  }
}

}  // namespace
}  // namespace instapop
