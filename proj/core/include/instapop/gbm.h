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

#ifndef INSTAPOP_GBM_H_
#define INSTAPOP_GBM_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "instapop/binning.h"
#include "instapop/featurize.h"
#include "instapop/schema.h"

namespace instapop {

struct GbmConfig {
  int num_leaves = 256;
  int max_bins = 255;
  double learning_rate = 0.05;
  double feature_fraction = 0.5;
  int n_rounds = 500;
  int min_data_in_leaf = 20;
  double lambda_l2 = 1.0;
  std::uint64_t seed = 0;

  // Throws InvalidArgument when a field is outside its domain.
  void validate() const;

  // Number of columns drawn per round out of n_features: ceil(fraction * n).
  std::size_t sampled_features(std::size_t n_features) const;

  std::string to_json() const;
  static GbmConfig from_json(std::string_view text);

  bool operator==(const GbmConfig&) const = default;
};

// Bitset over categorical codes 0..255.
using CategorySet = std::array<std::uint64_t, 4>;

inline bool category_in(const CategorySet& set, std::uint32_t code) {
  return code < 256 && ((set[code >> 6] >> (code & 63)) & 1u);
}
inline void category_add(CategorySet& set, std::uint32_t code) {
  set[code >> 6] |= std::uint64_t{1} << (code & 63);
}

struct TreeNode {
  static constexpr std::int32_t kLeaf = -1;

  std::int32_t split_column = kLeaf;
  bool categorical = false;
  // Numeric: left iff bin <= threshold_bin, equivalently value <= threshold.
  std::uint32_t threshold_bin = 0;
  double threshold = 0.0;
  // Categorical: left iff the code is in the set.
  CategorySet left_categories{};
  std::int32_t left = -1;
  std::int32_t right = -1;
  double leaf_value = 0.0;
  // Training rows routed through this node.
  double cover = 0.0;

  bool is_leaf() const { return split_column == kLeaf; }
  bool goes_left(double value) const;

  bool operator==(const TreeNode&) const = default;
};

// Binary regression tree; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  int num_leaves() const;
  int depth() const;
  // Naive traversal over the node array.
  double predict(std::span<const double> row) const;

  bool operator==(const Tree&) const = default;
};

// Trained model. Immutable; safe for concurrent predict/explain.
class TreeEnsemble {
 public:
  TreeEnsemble(FeatureSchema schema, GroupMask mask, GbmConfig config,
               double base_score, BinMapper bins, TransformParams transform,
               std::vector<Tree> trees);

  const FeatureSchema& schema() const { return schema_; }
  std::uint64_t schema_hash() const { return schema_.hash(); }
  GroupMask mask() const { return mask_; }
  const GbmConfig& config() const { return config_; }
  double base_score() const { return base_score_; }
  const BinMapper& bin_mapper() const { return bins_; }
  const TransformParams& transform() const { return transform_; }
  const std::vector<Tree>& trees() const { return trees_; }
  std::size_t num_features() const { return schema_.size(); }

  // base_score + sum of leaf values, using the packed node layout. Throws
  // SchemaMismatch if the row width differs from the schema.
  double predict_row(std::span<const double> features) const;

  // Same result via per-tree Tree::predict; slow reference path.
  double predict_row_reference(std::span<const double> features) const;

 private:
  struct PackedNode {
    // Numeric threshold, category-set index, or leaf value.
    double value;
    // >= 0: numeric split column; < -1: categorical split on column
    // -(feature + 2); -1: leaf.
    std::int32_t feature;
    // Left child; right child is left + 1.
    std::int32_t left;
  };

  void pack();

  FeatureSchema schema_;
  GroupMask mask_;
  GbmConfig config_;
  double base_score_;
  BinMapper bins_;
  TransformParams transform_;
  std::vector<Tree> trees_;

  std::vector<PackedNode> packed_;
  std::vector<std::int32_t> roots_;
  std::vector<CategorySet> packed_sets_;
};

// Row-major feature matrix tagged with the schema hash it was built for.
struct DenseMatrix {
  std::uint64_t schema_hash = 0;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * n_cols, n_cols};
  }
};

// Throws SchemaMismatch when the matrix was built for another schema.
std::vector<double> predict(const TreeEnsemble& model, const DenseMatrix& rows);

// Column-major binned training data, one span of n_rows bins per feature.
struct BinnedView {
  std::size_t n_rows = 0;
  std::vector<std::span<const std::uint8_t>> columns;
};

// Per-split trace, delivered before the chosen leaf is split. Spans are only
// valid during the callback.
struct SplitEvent {
  int round = 0;
  std::span<const double> gradients;
  std::span<const std::uint32_t> sampled_features;
  // Row sets of all current leaves, in creation order.
  std::vector<std::span<const std::uint32_t>> leaves;
  int chosen_leaf = 0;
  int feature = -1;
  bool categorical = false;
  std::uint32_t threshold_bin = 0;
  CategorySet left_categories{};
  double gain = 0.0;
};

class FitObserver {
 public:
  virtual ~FitObserver() = default;
  virtual void on_split(const SplitEvent&) {}
  // Training MSE after adding tree `round`.
  virtual void on_round(int /*round*/, double /*train_mse*/, const Tree&) {}
};

struct FitOptions {
  FitObserver* observer = nullptr;
  // Parallelise histogram construction and split search across features.
  bool parallel = false;
};

// Gradient boosting with squared loss on pre-binned columns.
//
// gradients g_i = pred_i - y_i, hessians 1. Each round draws
// ceil(feature_fraction * K) columns (seeded by config.seed and the round) and
// grows one tree leaf-wise: the open leaf with maximal gain
//   G_L^2/(n_L+lambda) + G_R^2/(n_R+lambda) - G^2/(n+lambda)
// is split until num_leaves is reached or no split has positive gain with
// both children holding min_data_in_leaf rows. Leaves output
// -learning_rate * G/(n+lambda). Ties in gain go to the lowest column, then
// the lowest threshold; ties between leaves go to the lowest leaf slot (a
// split leaf's left child keeps its slot, the right child is appended).
//
// Throws InvalidArgument for fewer than 2 rows or mismatched shapes, and
// TrainingError for a non-finite target.
TreeEnsemble fit_binned(const FeatureSchema& schema, const BinMapper& bins,
                        const BinnedView& data, std::span<const double> target,
                        const GbmConfig& config, const FitOptions& options = {},
                        TransformParams transform = {});

// Bins `features` (row-major, matching `schema`) and trains. Throws
// TrainingError for non-finite features.
TreeEnsemble fit(const FeatureSchema& schema, const DenseMatrix& features,
                 std::span<const double> target, const GbmConfig& config,
                 const FitOptions& options = {}, TransformParams transform = {});

// Mapper over the columns of a row-major matrix.
BinMapper build_bin_mapper(const FeatureSchema& schema,
                           const DenseMatrix& features, int max_bins);

// Column-major bins for every row of `features`.
std::vector<std::vector<std::uint8_t>> bin_columns(const BinMapper& bins,
                                                   const DenseMatrix& features);

}  // namespace instapop

#endif  // INSTAPOP_GBM_H_
