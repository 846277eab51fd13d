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

#ifndef INSTAPOP_ABLATION_H_
#define INSTAPOP_ABLATION_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "instapop/explain.h"
#include "instapop/gbm.h"
#include "instapop/ingest.h"
#include "instapop/metrics.h"
#include "instapop/schema.h"

namespace instapop {

enum class FoldMode : std::uint8_t {
  kShuffled,  // seeded permutation, then i mod n_folds
  kTemporal,  // contiguous blocks in row order
};

enum class CenteringMode : std::uint8_t {
  kFoldLocal,  // transform means from the training rows of each fold
  kGlobal,     // transform means from every row of the dataset
};

enum class ShapSource : std::uint8_t { kTestFold, kTrainFold };

// Residual threshold of the local-accuracy audit.
inline constexpr double kLocalAccuracyTolerance = 1e-6;

struct AblationPlan {
  std::vector<GroupMask> combinations;
  int n_folds = 3;
  std::uint64_t seed = 0;
  GbmConfig gbm;
  std::uint64_t shap_rows_per_fold = 10000;
  std::size_t top_k = 30;
  FoldMode fold_mode = FoldMode::kShuffled;
  CenteringMode centering = CenteringMode::kFoldLocal;
  ShapSource shap_source = ShapSource::kTestFold;
  // Runs (mask, fold) units concurrently. The report does not depend on it.
  bool parallel = false;

  // Throws InvalidArgument on an empty or duplicated mask list, n_folds < 2,
  // top_k == 0 or an invalid GbmConfig.
  void validate() const;
  std::string to_json() const;
};

// The 37 masks in table order: T, C, A, CT, AT, AC; every nonempty visual
// subset joined with CT; every visual subset joined with ACT.
AblationPlan default_plan();

// Fold id of each row.
std::vector<std::uint32_t> assign_folds(std::size_t n_rows, int n_folds,
                                        std::uint64_t seed, FoldMode mode);

// FNV-1a over the little-endian bytes of the row indices.
std::uint64_t rows_checksum(std::span<const std::uint32_t> rows);

struct FoldEntry {
  GroupMask mask;
  EvalResult eval;
  std::uint64_t n_train = 0;
  std::uint64_t fold_checksum = 0;  // of the held-out rows
  std::uint64_t shap_rows = 0;
  double max_local_residual = 0.0;
  std::uint64_t local_violations = 0;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation across folds
};

// Mean and n-1 standard deviation; sd is 0 for a single value.
Summary summarize(std::span<const double> values);

struct MaskResult {
  GroupMask mask;
  std::size_t n_columns = 0;
  std::vector<FoldEntry> folds;
  Summary src, rmse, r2;
  double train_seconds = 0.0;       // mean over folds
  double predict_ms_per_row = 0.0;  // mean over folds
  std::vector<double> mean_abs_phi;  // over the mask's projected columns
  std::vector<SignSplit> sign_split;
  GroupAttribution groups;
};

struct AblationReport {
  AblationPlan plan;
  FeatureSchema schema;  // of the dataset
  std::uint64_t n_rows = 0;
  std::uint64_t dataset_checksum = 0;
  std::vector<MaskResult> masks{};
  std::vector<RankedFeature> top_k{};
  double max_local_residual = 0.0;
  std::uint64_t local_violations = 0;

  std::size_t n_entries() const;
  // Throws InvalidArgument for a mask not in the report.
  const MaskResult& find(GroupMask mask) const;

  // Deterministic JSON. Wall-clock timings are left out so that reruns compare
  // byte for byte; they go to folds.csv and summary.csv.
  std::string to_json() const;
};

struct RunOptions {
  // Called once per finished (mask, fold) unit, serialized.
  std::function<void(const FoldEntry&)> on_entry;
};

// Runs every (mask, fold) unit. Throws InvalidArgument on too few rows
// (fewer than n_folds * min_data_in_leaf) or a mask the dataset cannot
// serve, TrainingError naming the mask when a fit fails.
AblationReport run(const AblationPlan& plan, const Dataset& ds,
                   const RunOptions& options = {});

enum class Verdict { kHigher, kLower, kIndistinguishable };

std::string_view to_string(Verdict v);

// Mean SRC of a against b with +-2 sd intervals: higher or lower when the
// intervals are disjoint. Throws InvalidArgument for an unknown mask.
Verdict compare(const AblationReport& report, GroupMask a, GroupMask b);

// Writes report.json, folds.csv, summary.csv, group_removed.csv, top_k.csv,
// group_attribution/<MASK>.csv and sign_split/<MASK>.csv under `dir`.
void write_report(const AblationReport& report, const std::filesystem::path& dir);

// Per-mask attribution tables from a report.json (or its directory).
std::vector<ModelAttributionTable> read_attribution_tables(
    const std::filesystem::path& path);

}  // namespace instapop

#endif  // INSTAPOP_ABLATION_H_
