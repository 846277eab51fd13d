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

#ifndef INSTAPOP_EXPLAIN_H_
#define INSTAPOP_EXPLAIN_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "instapop/gbm.h"
#include "instapop/schema.h"

namespace instapop {

struct Explanation {
  double base_value = 0.0;
  std::vector<double> phi;  // one per model column
  double prediction = 0.0;
};

// Cover-weighted expectation of a tree: each split weighs its children by
// cover(child) / cover(node).
double tree_expected_value(const Tree& tree);

// Exact path-dependent Shapley values of one tree for `row`, added into
// `phi`. Returns the tree's expected value.
double tree_shap_single(const Tree& tree, std::span<const double> row,
                        std::span<double> phi);

// Exact Shapley attributions of the whole ensemble: base_value is
// base_score + sum of tree expectations, phi the sum of per-tree values.
// Throws SchemaMismatch on a row of the wrong width.
Explanation tree_shap(const TreeEnsemble& model, std::span<const double> row);

// |base + sum(phi) - prediction| / max(1, |prediction|).
double local_accuracy_residual(const Explanation& e);

// Scatters phi over `model` columns into `target` columns; columns absent
// from the model get exactly 0.
std::vector<double> expand_phi(std::span<const double> phi,
                               const FeatureSchema& model,
                               const FeatureSchema& target);

struct SignSplit {
  double pos_mean = 0.0;  // mean of strictly positive values, 0 if none
  double neg_mean = 0.0;  // mean of strictly negative values, 0 if none

  bool operator==(const SignSplit&) const = default;
};

// Streaming per-column accumulator of |phi| and sign-split sums. Merging in a
// fixed order gives reproducible results.
class AttributionAccumulator {
 public:
  explicit AttributionAccumulator(std::size_t n_columns = 0);

  void add(std::span<const double> phi);
  void merge(const AttributionAccumulator& other);

  std::size_t n_columns() const { return sum_abs_.size(); }
  std::uint64_t n_rows() const { return n_rows_; }
  std::vector<double> mean_abs() const;
  std::vector<SignSplit> sign_split() const;

 private:
  std::uint64_t n_rows_ = 0;
  std::vector<double> sum_abs_;
  std::vector<double> pos_sum_;
  std::vector<double> neg_sum_;
  std::vector<std::uint64_t> pos_count_;
  std::vector<std::uint64_t> neg_count_;
};

// Stacked-bar group attribution: per column mean |phi|, summed per group.
struct GroupAttribution {
  std::array<double, kNumGroups> value{};

  double operator[](GroupCode g) const { return value[group_index(g)]; }
  double total() const;
  // value[g] / total(), 0 when the total is 0.
  double share(GroupCode g) const;
};

// Groups outside `mask` are exactly 0. Throws InvalidArgument on an empty
// collection.
GroupAttribution aggregate_groups(std::span<const Explanation> explanations,
                                  const FeatureSchema& schema, GroupMask mask);
GroupAttribution aggregate_groups(std::span<const double> mean_abs,
                                  const FeatureSchema& schema, GroupMask mask);

// Throws InvalidArgument on an empty collection.
std::vector<SignSplit> sign_split(std::span<const Explanation> explanations);

std::vector<double> mean_abs_phi(std::span<const Explanation> explanations);

// Mean |phi| per column of one model.
struct ModelAttributionTable {
  std::string model;
  std::vector<std::string> columns;
  std::vector<GroupCode> groups;
  std::vector<double> mean_abs;
};

ModelAttributionTable make_attribution_table(std::string model_name,
                                             const FeatureSchema& schema,
                                             std::vector<double> mean_abs);

struct RankedFeature {
  std::string column;
  GroupCode group;
  double score = 0.0;  // sum over models containing it / presence
  int presence = 0;
};

// Columns ranked by mean |phi| averaged over the models that contain them;
// descending score, ties by name. Returns at most k entries. Throws
// InvalidArgument for k == 0 or no tables.
std::vector<RankedFeature> cross_model_top_k(
    std::span<const ModelAttributionTable> tables, std::size_t k);

// CSV exports.
void write_phi_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                   std::span<const std::uint64_t> row_ids,
                   std::span<const Explanation> explanations);
void write_group_csv(const std::filesystem::path& path,
                     const GroupAttribution& groups);
void write_sign_split_csv(const std::filesystem::path& path,
                          const FeatureSchema& schema,
                          std::span<const SignSplit> split);
void write_top_k_csv(const std::filesystem::path& path,
                     std::span<const RankedFeature> ranking);

}  // namespace instapop

#endif  // INSTAPOP_EXPLAIN_H_
