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

#include "support.h"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "instapop/binning.h"
#include "instapop/featurize.h"

namespace instapop::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("instapop_" + tag + "_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

FeatureSchema small_schema(int n, bool categorical_first,
                           std::uint32_t cardinality) {
  std::vector<ColumnSpec> cols;
  for (int j = 0; j < n; ++j) {
    ColumnSpec c{"f" + std::to_string(j), GroupCode::kC,
                 ColumnKind::kContinuous, std::nullopt};
    if (j == 0 && categorical_first) {
      c.kind = ColumnKind::kCategorical;
      c.cardinality = cardinality;
    }
    cols.push_back(std::move(c));
  }
  return FeatureSchema(std::move(cols), "likes");
}

namespace {

constexpr std::uint32_t kCardinality = 5;

double uniform_in(SeqRng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng.uniform();
}

std::int32_t grow(Tree& t, SeqRng& rng, const RandomEnsembleSpec& spec,
                  int n_features, bool categorical, int depth, double cover) {
  const auto idx = static_cast<std::int32_t>(t.nodes.size());
  t.nodes.emplace_back();
  t.nodes[idx].cover = cover;
  const double stop = depth == 0 ? 0.1 : 0.3;
  if (depth == spec.max_depth || rng.uniform() < stop) {
    t.nodes[idx].leaf_value = uniform_in(rng, -2.0, 2.0);
    return idx;
  }
  TreeNode node = t.nodes[idx];
  node.split_column = static_cast<std::int32_t>(rng.below(n_features));
  if (categorical && node.split_column == 0) {
    node.categorical = true;
    const auto bits = 1 + rng.below((1u << kCardinality) - 2);
    for (std::uint32_t c = 0; c < kCardinality; ++c) {
      if ((bits >> c) & 1u) category_add(node.left_categories, c);
    }
  } else {
    node.threshold = uniform_in(rng, -1.0, 1.0);
  }
  double left_cover, right_cover;
  if (spec.consistent_covers) {
    left_cover = cover * uniform_in(rng, 0.05, 0.95);
    right_cover = cover - left_cover;
  } else {
    left_cover = uniform_in(rng, 1.0, 100.0);
    right_cover = uniform_in(rng, 1.0, 100.0);
  }
  node.left = grow(t, rng, spec, n_features, categorical, depth + 1, left_cover);
  node.right =
      grow(t, rng, spec, n_features, categorical, depth + 1, right_cover);
  t.nodes[idx] = node;
  return idx;
}

double conditional_value(const Tree& t, std::int32_t idx,
                         std::span<const double> row, std::uint32_t subset) {
  const TreeNode& n = t.nodes[idx];
  if (n.is_leaf()) return n.leaf_value;
  if ((subset >> n.split_column) & 1u) {
    return conditional_value(t, n.goes_left(row[n.split_column]) ? n.left
                                                                 : n.right,
                             row, subset);
  }
  const double cl = t.nodes[n.left].cover;
  const double cr = t.nodes[n.right].cover;
  return (cl * conditional_value(t, n.left, row, subset) +
          cr * conditional_value(t, n.right, row, subset)) /
         n.cover;
}

}  // namespace

TreeEnsemble random_ensemble(SeqRng& rng, const RandomEnsembleSpec& spec) {
  const int n_features = 1 + static_cast<int>(rng.below(spec.max_features));
  const bool categorical = n_features >= 2 && rng.uniform() < 0.3;
  const int n_trees = 1 + static_cast<int>(rng.below(spec.max_trees));
  std::vector<Tree> trees(n_trees);
  for (Tree& t : trees) {
    grow(t, rng, spec, n_features, categorical, 0, uniform_in(rng, 10, 1000));
  }
  std::vector<ColumnBins> cols(n_features);
  if (categorical) {
    cols[0].categorical = true;
    cols[0].n_bins = kCardinality;
  }
  return TreeEnsemble(small_schema(n_features, categorical, kCardinality),
                      GroupMask{GroupCode::kC}, GbmConfig{},
                      uniform_in(rng, -1.0, 1.0), BinMapper(std::move(cols)),
                      TransformParams{}, std::move(trees));
}

std::vector<double> random_row(SeqRng& rng, const TreeEnsemble& model) {
  std::vector<double> thresholds;
  for (const Tree& t : model.trees()) {
    for (const TreeNode& n : t.nodes) {
      if (!n.is_leaf() && !n.categorical) thresholds.push_back(n.threshold);
    }
  }
  std::vector<double> row(model.num_features());
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (model.schema().column(j).kind == ColumnKind::kCategorical) {
      row[j] = static_cast<double>(rng.below(kCardinality));
    } else if (!thresholds.empty() && rng.uniform() < 0.15) {
      // Exactly on a split point exercises the <= boundary.
      row[j] = thresholds[rng.below(thresholds.size())];
    } else {
      row[j] = uniform_in(rng, -1.5, 1.5);
    }
  }
  return row;
}

BruteForceShapley brute_force_shapley(const TreeEnsemble& model,
                                      std::span<const double> row) {
  const auto m = static_cast<int>(model.num_features());
  const std::uint32_t n_subsets = 1u << m;
  std::vector<double> v(n_subsets, model.base_score());
  for (std::uint32_t s = 0; s < n_subsets; ++s) {
    for (const Tree& t : model.trees()) v[s] += conditional_value(t, 0, row, s);
  }
  std::vector<double> fact(m + 1, 1.0);
  for (int i = 1; i <= m; ++i) fact[i] = fact[i - 1] * i;

  BruteForceShapley out;
  out.base_value = v[0];
  out.full_value = v[n_subsets - 1];
  out.phi.assign(m, 0.0);
  for (int i = 0; i < m; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t s = 0; s < n_subsets; ++s) {
      if (s & bit) continue;
      const int size = std::popcount(s);
      const double w = fact[size] * fact[m - size - 1] / fact[m];
      out.phi[i] += w * (v[s | bit] - v[s]);
    }
  }
  return out;
}

double split_gain(std::span<const std::uint32_t> rows,
                  std::span<const double> gradients,
                  const std::vector<std::uint8_t>& column,
                  std::uint32_t threshold_bin, int min_data, double lambda) {
  double g = 0.0, gl = 0.0;
  std::size_t nl = 0;
  for (std::uint32_t r : rows) {
    g += gradients[r];
    if (column[r] <= threshold_bin) {
      gl += gradients[r];
      ++nl;
    }
  }
  const std::size_t n = rows.size();
  const std::size_t nr = n - nl;
  const auto min = static_cast<std::size_t>(min_data);
  if (nl < min || nr < min) return -std::numeric_limits<double>::infinity();
  const double gr = g - gl;
  return gl * gl / (nl + lambda) + gr * gr / (nr + lambda) - g * g / (n + lambda);
}

SplitChoice exhaustive_best_split(
    std::span<const std::uint32_t> rows, std::span<const double> gradients,
    std::span<const std::uint32_t> features,
    const std::vector<std::vector<std::uint8_t>>& bins, const BinMapper& mapper,
    int min_data, double lambda) {
  std::vector<std::uint32_t> order(features.begin(), features.end());
  std::sort(order.begin(), order.end());
  SplitChoice best;
  for (std::uint32_t f : order) {
    const std::uint32_t nb = mapper.num_bins(f);
    for (std::uint32_t t = 0; t + 1 < nb; ++t) {
      const double gain =
          split_gain(rows, gradients, bins[f], t, min_data, lambda);
      if (gain > best.gain) {
        best.valid = true;
        best.feature = static_cast<int>(f);
        best.threshold_bin = t;
        best.gain = gain;
      }
    }
  }
  return best;
}

DenseMatrix make_matrix(const FeatureSchema& schema, std::size_t n_rows,
                        std::vector<double> values) {
  DenseMatrix m;
  m.schema_hash = schema.hash();
  m.n_rows = n_rows;
  m.n_cols = schema.size();
  m.values = std::move(values);
  return m;
}

}  // namespace instapop::testing

namespace instapop::testing {
namespace {

std::string full_precision(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

class SplitOracle : public FitObserver {
 public:
  SplitOracle(const DenseMatrix& x, std::span<const double> y,
              const GbmConfig& config, SplitOracleStats& stats)
      : x_(x), y_(y), config_(config), stats_(stats) {
    const FeatureSchema schema = small_schema(static_cast<int>(x.n_cols));
    mapper_ = build_bin_mapper(schema, x, config.max_bins);
    bins_ = bin_columns(mapper_, x);
    double offset = 0.0;
    for (double v : y) offset += v - y[0];
    pred_.assign(y.size(), y[0] + offset / static_cast<double>(y.size()));
  }

  void on_split(const SplitEvent& ev) override {
    ++stats_.splits;
    int best_leaf = -1;
    SplitChoice best;
    for (std::size_t l = 0; l < ev.leaves.size(); ++l) {
      const SplitChoice c = exhaustive_best_split(
          ev.leaves[l], ev.gradients, ev.sampled_features, bins_, mapper_,
          config_.min_data_in_leaf, config_.lambda_l2);
      if (c.valid && c.gain > best.gain) {
        best = c;
        best_leaf = static_cast<int>(l);
      }
    }
    if (best_leaf == ev.chosen_leaf && best.feature == ev.feature &&
        best.threshold_bin == ev.threshold_bin && !ev.categorical &&
        close(best.gain, ev.gain)) {
      ++stats_.exact_matches;
      return;
    }
    // Accept a different argmax only if its gain ties the best.
    const double chosen_gain =
        ev.categorical || ev.feature < 0
            ? -1.0
            : split_gain(ev.leaves[ev.chosen_leaf], ev.gradients,
                         bins_[ev.feature], ev.threshold_bin,
                         config_.min_data_in_leaf, config_.lambda_l2);
    // With no positive oracle gain, a split whose gain is rounding noise
    // around zero is a tie with stopping.
    const double target = best_leaf >= 0 ? best.gain : 0.0;
    if (close(chosen_gain, target) && close(ev.gain, target)) {
      ++stats_.fp_ties;
      return;
    }
    ++stats_.mismatches;
    if (stats_.first_failure.empty()) {
      stats_.first_failure =
          "round " + std::to_string(ev.round) + ": trainer leaf " +
          std::to_string(ev.chosen_leaf) + " feature " +
          std::to_string(ev.feature) + " bin " +
          std::to_string(ev.threshold_bin) + " gain " +
          full_precision(ev.gain) + "; oracle leaf " +
          std::to_string(best_leaf) + " feature " +
          std::to_string(best.feature) + " bin " +
          std::to_string(best.threshold_bin) + " gain " +
          full_precision(best.gain);
    }
  }

  void on_round(int round, double /*train_mse*/, const Tree& tree) override {
    const std::size_t n = y_.size();
    if (tree.num_leaves() < config_.num_leaves) {
      ++stats_.early_stops;
      std::vector<double> grad(n);
      for (std::size_t i = 0; i < n; ++i) grad[i] = pred_[i] - y_[i];
      std::vector<std::vector<std::uint32_t>> rows(tree.nodes.size());
      for (std::uint32_t i = 0; i < n; ++i) rows[leaf_of(tree, i)].push_back(i);
      const auto features = seeded_sample(
          x_.n_cols, config_.sampled_features(x_.n_cols), config_.seed,
          static_cast<std::uint64_t>(round));
      for (const auto& r : rows) {
        if (r.empty()) continue;
        const SplitChoice c =
            exhaustive_best_split(r, grad, features, bins_, mapper_,
                                  config_.min_data_in_leaf, config_.lambda_l2);
        if (c.valid && c.gain > 1e-12) {
          ++stats_.stop_violations;
          if (stats_.first_failure.empty()) {
            stats_.first_failure = "round " + std::to_string(round) +
                                   " stopped with a splittable leaf, gain " +
                                   full_precision(c.gain);
          }
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) pred_[i] += tree.predict(x_.row(i));
  }

 private:
  static bool close(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b));
  }

  std::size_t leaf_of(const Tree& tree, std::size_t i) const {
    std::int32_t idx = 0;
    while (!tree.nodes[idx].is_leaf()) {
      const TreeNode& nd = tree.nodes[idx];
      idx = nd.goes_left(x_.row(i)[nd.split_column]) ? nd.left : nd.right;
    }
    return static_cast<std::size_t>(idx);
  }

  const DenseMatrix& x_;
  std::span<const double> y_;
  GbmConfig config_;
  SplitOracleStats& stats_;
  BinMapper mapper_;
  std::vector<std::vector<std::uint8_t>> bins_;
  std::vector<double> pred_;
};

}  // namespace

SplitOracleStats run_split_oracle(std::uint64_t seed, int n_datasets) {
  SplitOracleStats stats;
  SeqRng rng(seed, 0x53504C54);
  for (int d = 0; d < n_datasets; ++d) {
    const std::size_t n = 2 + rng.below(63);
    const int n_features = 1 + static_cast<int>(rng.below(2));
    const FeatureSchema schema = small_schema(n_features);
    std::vector<double> values(n * n_features);
    for (int j = 0; j < n_features; ++j) {
      const bool discrete = rng.uniform() < 0.3;
      for (std::size_t i = 0; i < n; ++i) {
        values[i * n_features + j] = discrete
                                         ? static_cast<double>(rng.below(5))
                                         : uniform_in(rng, -3.0, 3.0);
      }
    }
    std::vector<double> y(n);
    const bool step = rng.uniform() < 0.3;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = step ? (values[i * n_features] > 0 ? 1.0 : 0.0)
                  : uniform_in(rng, -2.0, 2.0) + values[i * n_features];
    }
    GbmConfig config;
    config.num_leaves = 2 + static_cast<int>(rng.below(15));
    config.max_bins = rng.uniform() < 0.5 ? 255 : 2 + static_cast<int>(rng.below(20));
    config.learning_rate = uniform_in(rng, 0.05, 1.0);
    config.feature_fraction = rng.uniform() < 0.7 ? 1.0 : 0.5;
    config.n_rounds = 1 + static_cast<int>(rng.below(5));
    config.min_data_in_leaf = 1 + static_cast<int>(rng.below(5));
    const double lambdas[] = {0.0, 0.5, 1.0, 3.0};
    config.lambda_l2 = lambdas[rng.below(4)];
    config.seed = rng.next();

    const DenseMatrix x = make_matrix(schema, n, std::move(values));
    SplitOracle oracle(x, y, config, stats);
    FitOptions options;
    options.observer = &oracle;
    fit(schema, x, y, config, options);
    ++stats.datasets;
  }
  return stats;
}

}  // namespace instapop::testing
