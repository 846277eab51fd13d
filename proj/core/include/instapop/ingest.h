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

#ifndef INSTAPOP_INGEST_H_
#define INSTAPOP_INGEST_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instapop/schema.h"

namespace instapop {

// One post: the raw like count plus one value per schema column, in schema
// order. Ordinal and categorical values are stored as integral doubles.
struct PostRecord {
  std::uint64_t likes = 0;
  std::vector<double> values;
};

// Throws IngestError (with `row_number`, 1-based) if any value violates the
// column's kind: non-finite, non-integral ordinal/categorical, categorical
// code outside [0, cardinality), negative object count.
void validate_values(const FeatureSchema& schema, std::span<const double> values,
                     std::uint64_t row_number);

// Row-major table of posts sharing one schema. Row order is significant.
class Dataset {
 public:
  explicit Dataset(FeatureSchema schema) : schema_(std::move(schema)) {}

  const FeatureSchema& schema() const { return schema_; }
  std::size_t n_rows() const { return likes_.size(); }
  std::size_t n_cols() const { return schema_.size(); }

  void reserve(std::size_t rows);
  // Validates against the schema.
  void append(const PostRecord& record);
  void append(std::uint64_t likes, std::span<const double> values);

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * n_cols(), n_cols()};
  }
  double value(std::size_t i, std::size_t j) const {
    return values_[i * n_cols() + j];
  }
  std::uint64_t likes(std::size_t i) const { return likes_[i]; }
  const std::vector<std::uint64_t>& likes() const { return likes_; }
  PostRecord record(std::size_t i) const;

  // FNV-1a over likes and the bit patterns of all values.
  std::uint64_t checksum() const;

 private:
  FeatureSchema schema_;
  std::vector<std::uint64_t> likes_;
  std::vector<double> values_;
};

// Per-group weights and noise for the synthetic generator.
struct SynthConfig {
  std::uint64_t n_rows = 1000;
  std::uint64_t seed = 0;
  std::array<double, kNumGroups> group_signal{};  // indexed by group_index
  double noise_sd = 0.0;

  double signal(GroupCode g) const { return group_signal[group_index(g)]; }
  void set_signal(GroupCode g, double w) { group_signal[group_index(g)] = w; }

  // Throws InvalidArgument on n_rows == 0, negative weights or noise.
  void validate() const;
  std::string to_json() const;
};

// Level of the latent log-popularity before any planted signal.
inline constexpr double kSynthBaseLevel = 4.0;

// Planted per-group scores s_g for row `row` under `seed`:
//   A: (log1p(followers) - 6) / 2
//   C: piecewise in hashtag count: 0 -> -1, 1..10 -> 0.5, 11..30 -> 1,
//      31..60 -> -0.5
//   T: sin(2 pi hour / 24)
//   E: sum_k (-1)^k e_{100k} / sqrt(10), k = 0..9
//   P: sum_k (-1)^k p_scn_{36k} / sqrt(10), k = 0..9
//   Y: 0.5 * y_00 (person count)
//   I: iipa
// The latent log-popularity is
//   kSynthBaseLevel + sum_g w_g s_g + noise_sd * N(0, 1)
// and likes = max(0, round(exp(latent) - 1)).
std::array<double, kNumGroups> planted_group_scores(std::uint64_t seed,
                                                    std::uint64_t row);

// Author-dominant benchmark: signal A 1.0, C 0.2, T 0.1 and noise 0.5.
SynthConfig author_dominant_config(std::uint64_t n_rows, std::uint64_t seed);

// Deterministic synthetic dataset. Every column of `schema` must be a
// canonical column; values are drawn for the canonical row and projected.
// Draws come from CounterRng(seed, row), so the output is independent of
// chunking or thread count.
Dataset generate(const SynthConfig& config,
                 const FeatureSchema& schema = canonical_schema());

// Sidecar path for a dataset CSV: same stem, ".json" extension.
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

// Writes UTF-8 CSV (header "likes,<columns...>") plus the JSON sidecar with
// schema_version, schema_hash, n_rows, schema and optional generator config.
// Throws IoError.
void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                   const std::optional<SynthConfig>& generator = std::nullopt);

// Schema embedded in the sidecar of `csv_path`. Throws IngestError.
FeatureSchema read_sidecar_schema(const std::filesystem::path& csv_path);

// Reads and validates a dataset written by write_dataset. The sidecar's
// schema_hash must equal schema.hash(); every schema column must be present
// in the header. Throws IngestError (row number attached for value errors).
Dataset read_dataset(const std::filesystem::path& csv_path,
                     const FeatureSchema& schema = canonical_schema());

}  // namespace instapop

#endif  // INSTAPOP_INGEST_H_
