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

#ifndef INSTAPOP_TESTS_SUPPORT_H_
#define INSTAPOP_TESTS_SUPPORT_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "instapop/gbm.h"
#include "instapop/rng.h"
#include "instapop/schema.h"

namespace instapop::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

// Schema of n continuous columns f0..f{n-1}; with categorical_first, f0 is
// categorical with `cardinality` codes.
FeatureSchema small_schema(int n, bool categorical_first = false,
                           std::uint32_t cardinality = 5);

struct RandomEnsembleSpec {
  int max_features = 6;
  int max_depth = 3;
  int max_trees = 5;
  // Children's covers sum to the parent's; otherwise covers are independent.
  bool consistent_covers = true;
};

// Random ensemble over small_schema(): numeric splits on thresholds in
// (-1, 1), sometimes a categorical f0, leaf values in (-2, 2), random covers.
TreeEnsemble random_ensemble(SeqRng& rng, const RandomEnsembleSpec& spec);

// Random input row for an ensemble from random_ensemble().
std::vector<double> random_row(SeqRng& rng, const TreeEnsemble& model);

// Shapley values by enumerating every feature subset S with the value
// function v(S) = E[f(x) | x_S] under cover-weighted marginalisation.
struct BruteForceShapley {
  double base_value = 0.0;
  std::vector<double> phi;
  double full_value = 0.0;
};
BruteForceShapley brute_force_shapley(const TreeEnsemble& model,
                                      std::span<const double> row);

// Exhaustive numeric split search over one leaf.
struct SplitChoice {
  bool valid = false;
  int feature = -1;
  std::uint32_t threshold_bin = 0;
  double gain = 0.0;
};
SplitChoice exhaustive_best_split(std::span<const std::uint32_t> rows,
                                  std::span<const double> gradients,
                                  std::span<const std::uint32_t> features,
                                  const std::vector<std::vector<std::uint8_t>>& bins,
                                  const BinMapper& mapper, int min_data,
                                  double lambda);

// Gain of splitting `rows` on column <= threshold_bin, or -inf when a side
// holds fewer than min_data rows.
double split_gain(std::span<const std::uint32_t> rows,
                  std::span<const double> gradients,
                  const std::vector<std::uint8_t>& column,
                  std::uint32_t threshold_bin, int min_data, double lambda);

// Trains on random tiny data sets (at most 64 rows, at most 2 numeric
// features) and checks every split the trainer makes against
// exhaustive_best_split over all current leaves. When a tree stops below its
// leaf cap, checks that no leaf had a valid split with positive gain. Gains
// that agree to 1e-9 relative count as floating-point ties.
struct SplitOracleStats {
  int datasets = 0;
  int splits = 0;
  int exact_matches = 0;
  int fp_ties = 0;
  int mismatches = 0;
  int early_stops = 0;
  int stop_violations = 0;
  std::string first_failure;
};
SplitOracleStats run_split_oracle(std::uint64_t seed, int n_datasets);

// Dense row-major matrix tagged with schema's hash.
DenseMatrix make_matrix(const FeatureSchema& schema, std::size_t n_rows,
                        std::vector<double> values);

}  // namespace instapop::testing

#endif  // INSTAPOP_TESTS_SUPPORT_H_
