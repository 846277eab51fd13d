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

#include "instapop/gbm.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "instapop/error.h"
#include "instapop/model_io.h"
#include "instapop/parallel.h"
#include "instapop/rng.h"
#include "support.h"

namespace instapop {
namespace {

using testing::make_matrix;
using testing::small_schema;

struct Data {
  FeatureSchema schema;
  DenseMatrix x;
  std::vector<double> y;
};

// n rows; f0 categorical with 6 codes, the rest continuous. Target mixes a
// step on f1, a categorical effect and noise.
Data random_data(std::uint64_t seed, std::size_t n, int n_features,
                 double noise = 0.3) {
  Data d{small_schema(n_features, true, 6), {}, {}};
  SeqRng rng(seed, 1);
  std::vector<double> v(n * n_features);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = v.data() + i * n_features;
    row[0] = static_cast<double>(rng.below(6));
    for (int j = 1; j < n_features; ++j) row[j] = rng.uniform() * 4 - 2;
    d.y[i] = (row[0] == 2 || row[0] == 4 ? 1.0 : 0.0) +
             (n_features > 1 && row[1] > 0.3 ? 2.0 : 0.0) +
             (n_features > 2 ? std::sin(3 * row[2]) : 0.0) +
             noise * (rng.uniform() - 0.5);
  }
  d.x = make_matrix(d.schema, n, std::move(v));
  return d;
}

GbmConfig small_config(int rounds) {
  GbmConfig c;
  c.num_leaves = 31;
  c.n_rounds = rounds;
  c.min_data_in_leaf = 5;
  c.feature_fraction = 0.8;
  c.seed = 17;
  return c;
}

TEST(GbmConfig, DefaultsAndValidation) {
  const GbmConfig c;
  EXPECT_EQ(c.num_leaves, 256);
  EXPECT_EQ(c.max_bins, 255);
  EXPECT_EQ(c.learning_rate, 0.05);
  EXPECT_EQ(c.feature_fraction, 0.5);
  EXPECT_EQ(c.sampled_features(1566), 783u);
  EXPECT_EQ(c.sampled_features(17), 9u);
  EXPECT_EQ(c.sampled_features(1), 1u);
  EXPECT_EQ(GbmConfig::from_json(c.to_json()), c);
  GbmConfig bad = c;
  bad.num_leaves = 1;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = c;
  bad.learning_rate = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = c;
  bad.max_bins = 256;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = c;
  bad.feature_fraction = 1.5;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Fit, ConstantTargetPredictsConstant) {
  Data d = random_data(1, 300, 3);
  std::fill(d.y.begin(), d.y.end(), 2.75);
  const TreeEnsemble m = fit(d.schema, d.x, d.y, small_config(3));
  EXPECT_EQ(m.base_score(), 2.75);
  for (double p : predict(m, d.x)) EXPECT_EQ(p, 2.75);
  for (const Tree& t : m.trees()) EXPECT_EQ(t.num_leaves(), 1);
}

TEST(Fit, SeparableStepConverges) {
  const std::size_t n = 1000;
  const FeatureSchema s = small_schema(3);
  SeqRng rng(2, 0);
  std::vector<double> v(n * 3), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    // 200 grid values per column, so every value has its own bin.
    for (int j = 0; j < 3; ++j) {
      v[i * 3 + j] = (static_cast<double>(rng.below(200)) - 99.5) / 100.0;
    }
    y[i] = v[i * 3] > 0 ? 1.0 : 0.0;
  }
  const DenseMatrix x = make_matrix(s, n, std::move(v));
  GbmConfig c;
  c.n_rounds = 200;
  c.feature_fraction = 1.0;
  const TreeEnsemble m = fit(s, x, y, c);
  double sse = 0;
  const auto p = predict(m, x);
  for (std::size_t i = 0; i < n; ++i) sse += (p[i] - y[i]) * (p[i] - y[i]);
  EXPECT_LT(std::sqrt(sse / n), 0.01);
}

TEST(Fit, FirstLeafValuesFollowShrunkenMean) {
  Data d = random_data(3, 200, 2, 0.0);
  GbmConfig c = small_config(1);
  c.num_leaves = 2;
  c.learning_rate = 0.1;
  c.lambda_l2 = 2.0;
  c.feature_fraction = 1.0;
  const TreeEnsemble m = fit(d.schema, d.x, d.y, c);
  const Tree& t = m.trees().at(0);
  ASSERT_EQ(t.num_leaves(), 2);
  const TreeNode& root = t.nodes[0];
  for (std::int32_t child : {root.left, root.right}) {
    double g = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < d.y.size(); ++i) {
      const bool left = root.goes_left(d.x.row(i)[root.split_column]);
      if (left == (child == root.left)) {
        g += m.base_score() - d.y[i];
        ++cnt;
      }
    }
    EXPECT_NEAR(t.nodes[child].leaf_value, -0.1 * g / (cnt + 2.0), 1e-12);
    EXPECT_EQ(t.nodes[child].cover, static_cast<double>(cnt));
  }
}

TEST(Fit, RejectsBadInput) {
  Data d = random_data(4, 10, 2);
  const DenseMatrix one = make_matrix(d.schema, 1, {0.0, 0.5});
  EXPECT_THROW(fit(d.schema, one, std::vector<double>{1.0}, small_config(1)),
               InvalidArgument);
  auto y = d.y;
  y[3] = std::nan("");
  EXPECT_THROW(fit(d.schema, d.x, y, small_config(1)), TrainingError);
  auto x = d.x;
  x.values[5] = INFINITY;
  EXPECT_THROW(fit(d.schema, x, d.y, small_config(1)), TrainingError);
  EXPECT_THROW(fit(d.schema, d.x, std::vector<double>{1, 2}, small_config(1)),
               InvalidArgument);
}

TEST(Predict, EmptyEnsembleIsBaseScore) {
  Data d = random_data(5, 50, 3);
  const TreeEnsemble m = fit(d.schema, d.x, d.y, small_config(0));
  EXPECT_TRUE(m.trees().empty());
  for (double p : predict(m, d.x)) EXPECT_EQ(p, m.base_score());
}

TEST(Predict, SingleStump) {
  const FeatureSchema s = small_schema(2);
  Tree t;
  t.nodes.resize(3);
  t.nodes[0].split_column = 1;
  t.nodes[0].threshold = 0.5;
  t.nodes[0].left = 1;
  t.nodes[0].right = 2;
  t.nodes[1].leaf_value = -1.5;
  t.nodes[2].leaf_value = 4.0;
  const TreeEnsemble m(s, GroupMask{GroupCode::kC}, GbmConfig{}, 10.0,
                       BinMapper(std::vector<ColumnBins>(2)), TransformParams{},
                       {t});
  EXPECT_EQ(m.predict_row(std::vector<double>{9, 0.5}), 8.5);
  EXPECT_EQ(m.predict_row(std::vector<double>{9, 0.6}), 14.0);
  EXPECT_THROW(m.predict_row(std::vector<double>{1}), SchemaMismatch);
}

TEST(Predict, MatrixForOtherSchemaIsMismatch) {
  Data d = random_data(6, 50, 3);
  const TreeEnsemble m = fit(d.schema, d.x, d.y, small_config(2));
  DenseMatrix other = d.x;
  other.schema_hash ^= 1;
  EXPECT_THROW(predict(m, other), SchemaMismatch);
}

TEST(PredictProperty, PackedLayoutAgreesWithReference) {
  Data d = random_data(7, 3000, 6);
  GbmConfig c = small_config(40);
  c.num_leaves = 63;
  c.min_data_in_leaf = 3;
  const TreeEnsemble m = fit(d.schema, d.x, d.y, c);
  SeqRng rng(8, 0);
  double max_diff = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> row(6);
    row[0] = static_cast<double>(rng.below(6));
    for (int j = 1; j < 6; ++j) row[j] = rng.uniform() * 5 - 2.5;
    max_diff = std::max(max_diff, std::abs(m.predict_row(row) -
                                           m.predict_row_reference(row)));
  }
  EXPECT_EQ(max_diff, 0.0);
}

class LossTrace : public FitObserver {
 public:
  void on_round(int, double mse, const Tree& t) override {
    mse_.push_back(mse);
    max_leaves_ = std::max(max_leaves_, t.num_leaves());
  }
  std::vector<double> mse_;
  int max_leaves_ = 0;
};

TEST(FitProperty, TrainingLossNonIncreasing) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Data d = random_data(seed, 2000, 5);
    LossTrace trace;
    FitOptions opt;
    opt.observer = &trace;
    GbmConfig c = small_config(120);
    c.learning_rate = 0.2;
    fit(d.schema, d.x, d.y, c, opt);
    ASSERT_EQ(trace.mse_.size(), 120u);
    for (std::size_t r = 1; r < trace.mse_.size(); ++r) {
      EXPECT_LE(trace.mse_[r], trace.mse_[r - 1]) << "round " << r;
    }
    EXPECT_LT(trace.mse_.back(), trace.mse_.front());
  }
}

TEST(FitProperty, LeafCapRespected) {
  Data d = random_data(21, 12000, 8);
  for (int cap : {2, 31, 256}) {
    GbmConfig c = small_config(4);
    c.num_leaves = cap;
    c.min_data_in_leaf = 2;
    c.feature_fraction = 1.0;
    LossTrace trace;
    FitOptions opt;
    opt.observer = &trace;
    const TreeEnsemble m = fit(d.schema, d.x, d.y, c, opt);
    EXPECT_EQ(trace.max_leaves_, cap) << "cap should be reached";
    for (const Tree& t : m.trees()) EXPECT_LE(t.num_leaves(), cap);
  }
}

TEST(FitProperty, CoverConservation) {
  Data d = random_data(22, 1500, 4);
  const TreeEnsemble m = fit(d.schema, d.x, d.y, small_config(20));
  for (const Tree& t : m.trees()) {
    EXPECT_EQ(t.nodes[0].cover, 1500.0);
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf()) continue;
      EXPECT_EQ(t.nodes[n.left].cover + t.nodes[n.right].cover, n.cover);
      EXPECT_GE(t.nodes[n.left].cover, 5.0);
      EXPECT_GE(t.nodes[n.right].cover, 5.0);
    }
  }
}

TEST(FitProperty, SplitsMatchExhaustiveSearch) {
  const auto stats = testing::run_split_oracle(1, 150);
  EXPECT_EQ(stats.datasets, 150);
  EXPECT_GT(stats.splits, 300);
  EXPECT_EQ(stats.mismatches, 0) << stats.first_failure;
  EXPECT_EQ(stats.stop_violations, 0) << stats.first_failure;
  EXPECT_GT(stats.exact_matches, stats.fp_ties);
}

// Categorical splits: categories ordered by G/(n+lambda) and the best prefix
// taken as the left set.
class CategoricalOracle : public FitObserver {
 public:
  CategoricalOracle(const DenseMatrix& x, double lambda, int min_data)
      : x_(x), lambda_(lambda), min_data_(min_data) {}
  void on_split(const SplitEvent& ev) override {
    ASSERT_TRUE(ev.categorical);
    const auto rows = ev.leaves[ev.chosen_leaf];
    std::vector<double> g(6, 0.0);
    std::vector<int> cnt(6, 0);
    double total = 0;
    for (std::uint32_t r : rows) {
      const auto c = static_cast<int>(x_.row(r)[0]);
      g[c] += ev.gradients[r];
      ++cnt[c];
      total += ev.gradients[r];
    }
    std::vector<int> order;
    for (int c = 0; c < 6; ++c) {
      if (cnt[c] > 0) order.push_back(c);
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return g[a] / (cnt[a] + lambda_) < g[b] / (cnt[b] + lambda_);
    });
    const double n = static_cast<double>(rows.size());
    double best = 0, gl = 0;
    int nl = 0;
    std::size_t best_p = 0;
    for (std::size_t p = 0; p + 1 < order.size(); ++p) {
      gl += g[order[p]];
      nl += cnt[order[p]];
      const double nr = n - nl;
      if (nl < min_data_ || nr < min_data_) continue;
      const double gain = gl * gl / (nl + lambda_) +
                          (total - gl) * (total - gl) / (nr + lambda_) -
                          total * total / (n + lambda_);
      if (gain > best) {
        best = gain;
        best_p = p + 1;
      }
    }
    CategorySet expected{};
    for (std::size_t p = 0; p < best_p; ++p) category_add(expected, order[p]);
    EXPECT_EQ(ev.left_categories, expected);
    EXPECT_NEAR(ev.gain, best, 1e-9 * std::max(1.0, best));
    ++checked;
  }
  int checked = 0;

 private:
  const DenseMatrix& x_;
  double lambda_;
  int min_data_;
};

TEST(FitProperty, CategoricalSplitsUseOrderedPrefix) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const FeatureSchema s = small_schema(1, true, 6);
    SeqRng rng(seed, 9);
    const std::size_t n = 40 + rng.below(200);
    std::vector<double> v(n), y(n);
    const double effect[6] = {0.3, -1.0, 2.0, 0.1, -0.4, 1.2};
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<double>(rng.below(6));
      y[i] = effect[static_cast<int>(v[i])] + rng.uniform();
    }
    const DenseMatrix x = make_matrix(s, n, std::move(v));
    GbmConfig c = small_config(3);
    c.feature_fraction = 1.0;
    c.min_data_in_leaf = 3;
    CategoricalOracle oracle(x, c.lambda_l2, c.min_data_in_leaf);
    FitOptions opt;
    opt.observer = &oracle;
    fit(s, x, y, c, opt);
    EXPECT_GT(oracle.checked, 0);
  }
}

TEST(FitProperty, DeterministicAcrossParallelism) {
  Data d = random_data(30, 4000, 12);
  GbmConfig c = small_config(15);
  c.num_leaves = 64;
  std::string reference;
  for (int threads : {1, 2, 4}) {
    for (bool parallel : {false, true}) {
      ThreadLimit limit(threads);
      FitOptions opt;
      opt.parallel = parallel;
      const std::string text =
          serialize_model(fit(d.schema, d.x, d.y, c, opt));
      if (reference.empty()) reference = text;
      EXPECT_EQ(text, reference) << threads << " threads, parallel " << parallel;
    }
  }
}

TEST(FitProperty, SeedChangesFeatureSampling) {
  Data d = random_data(31, 1000, 10);
  GbmConfig c = small_config(5);
  c.feature_fraction = 0.3;
  const auto a = serialize_model(fit(d.schema, d.x, d.y, c));
  c.seed = 18;
  const auto b = serialize_model(fit(d.schema, d.x, d.y, c));
  EXPECT_NE(a, b);
}

TEST(FitBinned, MatchesDenseFit) {
  Data d = random_data(32, 800, 4);
  const GbmConfig c = small_config(10);
  const BinMapper bins = build_bin_mapper(d.schema, d.x, c.max_bins);
  const auto cols = bin_columns(bins, d.x);
  BinnedView view;
  view.n_rows = d.x.n_rows;
  for (const auto& col : cols) view.columns.emplace_back(col);
  EXPECT_EQ(serialize_model(fit_binned(d.schema, bins, view, d.y, c)),
            serialize_model(fit(d.schema, d.x, d.y, c)));
}

}  // namespace
}  // namespace instapop
