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

#ifndef INSTAPOP_FEATURIZE_H_
#define INSTAPOP_FEATURIZE_H_

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "instapop/ingest.h"
#include "instapop/schema.h"

namespace instapop {

// log(x + 1) - mean_log, natural log. Throws DomainError for x < 0.
double log1p_center(double x, double mean_log);

// Means of log1p over the training rows for the three author counts and the
// like target. Default-constructed params are unfitted.
class TransformParams {
 public:
  TransformParams() = default;

  bool fitted() const { return fitted_; }
  std::uint64_t fitted_rows() const { return fitted_rows_; }

  // Ordered (column, mean_log) pairs: a_followers, a_following, a_posts, then
  // the target column.
  const std::vector<std::pair<std::string, double>>& entries() const {
    return entries_;
  }

  // Throws StateError if unfitted, InvalidArgument for an unknown column.
  double mean_log(std::string_view column) const;
  double target_mean() const;

  static TransformParams from_means(double followers, double following,
                                    double posts, double target,
                                    std::uint64_t fitted_rows,
                                    std::string target_name = "likes");

  std::string to_json() const;
  static TransformParams from_json(std::string_view text);

  bool operator==(const TransformParams&) const = default;

 private:
  bool fitted_ = false;
  std::uint64_t fitted_rows_ = 0;
  std::vector<std::pair<std::string, double>> entries_;
};

// Fits on `rows` of `ds` only. An author count absent from the dataset gets
// mean 0. Throws InvalidArgument on an empty slice.
TransformParams fit_transform_params(const Dataset& ds,
                                     std::span<const std::uint32_t> rows);

// Fills a_follower_per_post = (followers+1)/(posts+1) and
// a_follower_per_following = (followers+1)/(following+1).
PostRecord augment_ratios(PostRecord row, const FeatureSchema& schema);

struct TimeParts {
  int day_of_month;  // 1..31
  int weekday;       // 0 = Monday
  int hour;          // 0..23, truncated

  bool operator==(const TimeParts&) const = default;
};

TimeParts split_timestamp(std::chrono::sys_seconds posted_at);
// Parses "YYYY-MM-DDTHH:MM:SS" ('T' or a space between date and time) with
// an optional trailing 'Z' (UTC). Throws
// IngestError on malformed or out-of-range input.
TimeParts split_timestamp(std::string_view iso_utc);

// log1p_center(likes, target mean). Throws StateError if unfitted.
double transform_target(std::uint64_t likes, const TransformParams& params);

// Inverse of transform_target on the real line: max(0, exp(x + mean) - 1).
double inverse_target(double transformed, const TransformParams& params);

// Maps a row of a source dataset onto a model's feature columns, applying
// log1p_center to the author counts.
class RowTransformer {
 public:
  // Throws SchemaMismatch if a model column is absent from the source or has
  // a different kind.
  RowTransformer(const FeatureSchema& source, const FeatureSchema& model,
                 const TransformParams& params);

  std::size_t width() const { return source_index_.size(); }
  void apply(std::span<const double> source_row, std::span<double> out) const;

 private:
  std::vector<std::size_t> source_index_;
  // mean_log for log-centred columns; NaN marks pass-through columns.
  std::vector<double> center_;
};

}  // namespace instapop

#endif  // INSTAPOP_FEATURIZE_H_
