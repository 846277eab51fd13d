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

#ifndef INSTAPOP_BINNING_H_
#define INSTAPOP_BINNING_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "instapop/schema.h"

namespace instapop {

inline constexpr int kMaxBins = 255;

// Bin layout of one column.
//
// Numeric (continuous/ordinal) columns carry ascending finite upper bounds
// u_0 < ... < u_{n-2}; a value v lands in the first bin k with v <= u_k, or in
// the last bin. Hence bin(v) <= k exactly when v <= u_k, and a split "bin <= k"
// can be evaluated on raw values as "v <= u_k".
//
// Categorical columns map code c to bin c (identity), n_bins = cardinality.
struct ColumnBins {
  bool categorical = false;
  std::uint32_t n_bins = 1;
  std::vector<double> upper_bounds;

  std::uint8_t bin(double v) const;
  bool operator==(const ColumnBins&) const = default;
};

// Quantile boundaries over the sorted sample. If the column has at most
// max_bins distinct values each gets its own bin, with boundaries at
// midpoints. Throws InvalidArgument for max_bins outside [1, 255] or a
// categorical cardinality above 256.
ColumnBins build_column_bins(std::span<const double> values,
                             const ColumnSpec& spec, int max_bins);

class BinMapper {
 public:
  BinMapper() = default;
  explicit BinMapper(std::vector<ColumnBins> columns)
      : columns_(std::move(columns)) {}

  std::size_t size() const { return columns_.size(); }
  const ColumnBins& column(std::size_t j) const { return columns_[j]; }
  std::uint8_t bin(std::size_t j, double v) const { return columns_[j].bin(v); }
  std::uint32_t num_bins(std::size_t j) const { return columns_[j].n_bins; }

  // Sub-mapper over the given column indices, in that order.
  BinMapper select(std::span<const std::size_t> indices) const;

  bool operator==(const BinMapper&) const = default;

 private:
  std::vector<ColumnBins> columns_;
};

}  // namespace instapop

#endif  // INSTAPOP_BINNING_H_
