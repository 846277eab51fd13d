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

#include "instapop/binning.h"

#include <algorithm>

#include "instapop/error.h"

namespace instapop {

namespace {

// A boundary b with a <= b < hi for a < hi.
double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

}  // namespace

std::uint8_t ColumnBins::bin(double v) const {
  if (categorical) {
    const double c = std::clamp(v, 0.0, static_cast<double>(n_bins - 1));
    return static_cast<std::uint8_t>(c);
  }
  const auto it = std::lower_bound(upper_bounds.begin(), upper_bounds.end(), v);
  return static_cast<std::uint8_t>(it - upper_bounds.begin());
}

ColumnBins build_column_bins(std::span<const double> values,
                             const ColumnSpec& spec, int max_bins) {
  if (max_bins < 1 || max_bins > kMaxBins) {
    throw InvalidArgument("max_bins must be in [1, 255], got " +
                          std::to_string(max_bins));
  }
  ColumnBins out;
  if (spec.kind == ColumnKind::kCategorical) {
    if (*spec.cardinality > 256) {
      throw InvalidArgument("categorical column '" + spec.name +
                            "' has more than 256 categories");
    }
    out.categorical = true;
    out.n_bins = *spec.cardinality;
    return out;
  }
  if (values.empty()) return out;

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  std::vector<double> distinct;
  distinct.reserve(std::min<std::size_t>(n, max_bins + 1));
  for (double v : sorted) {
    if (distinct.empty() || v != distinct.back()) {
      distinct.push_back(v);
      if (distinct.size() > static_cast<std::size_t>(max_bins)) break;
    }
  }

  if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t k = 1; k < distinct.size(); ++k) {
      out.upper_bounds.push_back(midpoint(distinct[k - 1], distinct[k]));
    }
  } else {
    // Cut after every n/max_bins-th sample, moving past runs of ties.
    for (int k = 1; k < max_bins; ++k) {
      std::size_t idx = static_cast<std::size_t>(
          (static_cast<unsigned long long>(k) * n) / max_bins);
      if (idx == 0) continue;
      if (sorted[idx - 1] == sorted[idx]) {
        idx = static_cast<std::size_t>(
            std::upper_bound(sorted.begin(), sorted.end(), sorted[idx]) -
            sorted.begin());
        if (idx >= n) break;
      }
      const double bound = midpoint(sorted[idx - 1], sorted[idx]);
      if (out.upper_bounds.empty() || bound > out.upper_bounds.back()) {
        out.upper_bounds.push_back(bound);
      }
    }
  }
  out.n_bins = static_cast<std::uint32_t>(out.upper_bounds.size() + 1);
  return out;
}

BinMapper BinMapper::select(std::span<const std::size_t> indices) const {
  std::vector<ColumnBins> cols;
  cols.reserve(indices.size());
  for (std::size_t j : indices) cols.push_back(columns_.at(j));
  return BinMapper(std::move(cols));
}

}  // namespace instapop
