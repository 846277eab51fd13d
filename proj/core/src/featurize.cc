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

#include "instapop/featurize.h"

#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

#include "instapop/error.h"
#include "json.hpp"

namespace instapop {

double log1p_center(double x, double mean_log) {
  if (!(x >= 0.0)) {
    throw DomainError("log1p_center requires x >= 0, got " + std::to_string(x));
  }
  return std::log1p(x) - mean_log;
}

double TransformParams::mean_log(std::string_view column) const {
  if (!fitted_) throw StateError("transform parameters are not fitted");
  for (const auto& [name, mean] : entries_) {
    if (name == column) return mean;
  }
  throw InvalidArgument("no transform for column '" + std::string(column) + "'");
}

double TransformParams::target_mean() const {
  if (!fitted_) throw StateError("transform parameters are not fitted");
  return entries_.back().second;
}

TransformParams TransformParams::from_means(double followers, double following,
                                            double posts, double target,
                                            std::uint64_t fitted_rows,
                                            std::string target_name) {
  for (double m : {followers, following, posts, target}) {
    if (!std::isfinite(m)) throw InvalidArgument("transform means must be finite");
  }
  TransformParams p;
  p.fitted_ = true;
  p.fitted_rows_ = fitted_rows;
  p.entries_ = {{std::string(kLogCenteredColumns[0]), followers},
                {std::string(kLogCenteredColumns[1]), following},
                {std::string(kLogCenteredColumns[2]), posts},
                {std::move(target_name), target}};
  return p;
}

std::string TransformParams::to_json() const {
  nlohmann::ordered_json doc;
  doc["fitted"] = fitted_;
  doc["fitted_rows"] = fitted_rows_;
  auto& means = doc["mean_log"] = nlohmann::ordered_json::array();
  for (const auto& [name, mean] : entries_) {
    means.push_back({{"column", name}, {"mean", mean}});
  }
  return doc.dump();
}

TransformParams TransformParams::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    TransformParams p;
    if (!doc.at("fitted").get<bool>()) return p;
    const auto& means = doc.at("mean_log");
    if (means.size() != 4) throw ModelFormatError("expected 4 transform means");
    for (std::size_t i = 0; i < 3; ++i) {
      if (means[i].at("column").get<std::string>() != kLogCenteredColumns[i]) {
        throw ModelFormatError("unexpected transform column order");
      }
    }
    return from_means(means[0].at("mean").get<double>(),
                      means[1].at("mean").get<double>(),
                      means[2].at("mean").get<double>(),
                      means[3].at("mean").get<double>(),
                      doc.at("fitted_rows").get<std::uint64_t>(),
                      means[3].at("column").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("malformed transform params: ") +
                           e.what());
  }
}

TransformParams fit_transform_params(const Dataset& ds,
                                     std::span<const std::uint32_t> rows) {
  if (rows.empty()) {
    throw InvalidArgument("cannot fit transforms on an empty training slice");
  }
  const FeatureSchema& schema = ds.schema();
  std::array<std::optional<std::size_t>, 3> cols;
  for (std::size_t k = 0; k < 3; ++k) cols[k] = schema.find(kLogCenteredColumns[k]);
  std::array<double, 4> sums{};
  for (std::uint32_t r : rows) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (cols[k]) sums[k] += log1p_center(ds.value(r, *cols[k]), 0.0);
    }
    sums[3] += std::log1p(static_cast<double>(ds.likes(r)));
  }
  const double n = static_cast<double>(rows.size());
  return TransformParams::from_means(sums[0] / n, sums[1] / n, sums[2] / n,
                                     sums[3] / n, rows.size(),
                                     schema.target_name());
}

PostRecord augment_ratios(PostRecord row, const FeatureSchema& schema) {
  const auto at = [&](std::string_view name) -> double& {
    return row.values.at(schema.index_of(name));
  };
  const double followers = at("a_followers");
  const double following = at("a_following");
  const double posts = at("a_posts");
  at("a_follower_per_post") = (followers + 1.0) / (posts + 1.0);
  at("a_follower_per_following") = (followers + 1.0) / (following + 1.0);
  return row;
}

TimeParts split_timestamp(std::chrono::sys_seconds posted_at) {
  using namespace std::chrono;
  const sys_days day = floor<days>(posted_at);
  const year_month_day ymd{day};
  const weekday wd{day};
  const auto since_midnight = posted_at - day;
  return {static_cast<int>(static_cast<unsigned>(ymd.day())),
          static_cast<int>(wd.iso_encoding()) - 1,
          static_cast<int>(floor<hours>(since_midnight).count())};
}

TimeParts split_timestamp(std::string_view iso_utc) {
  const auto fail = [&]() -> IngestError {
    return IngestError("unparseable timestamp '" + std::string(iso_utc) + "'",
                       0);
  };
  std::string_view s = iso_utc;
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
  // YYYY-MM-DDTHH:MM:SS
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' ||
      (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || s[13] != ':' ||
      s[16] != ':') {
    throw fail();
  }
  const auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    const char* first = s.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc() || ptr != first + len) throw fail();
    return v;
  };
  using namespace std::chrono;
  const year_month_day ymd{year{field(0, 4)},
                           month{static_cast<unsigned>(field(5, 2))},
                           day{static_cast<unsigned>(field(8, 2))}};
  const int hh = field(11, 2), mm = field(14, 2), ss = field(17, 2);
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) throw fail();
  return split_timestamp(sys_seconds{sys_days{ymd}} + hours{hh} + minutes{mm} +
                         seconds{ss});
}

double transform_target(std::uint64_t likes, const TransformParams& params) {
  return log1p_center(static_cast<double>(likes), params.target_mean());
}

double inverse_target(double transformed, const TransformParams& params) {
  const double v = std::expm1(transformed + params.target_mean());
  return v > 0.0 ? v : 0.0;
}

RowTransformer::RowTransformer(const FeatureSchema& source,
                               const FeatureSchema& model,
                               const TransformParams& params) {
  source_index_.reserve(model.size());
  center_.reserve(model.size());
  for (const auto& c : model.columns()) {
    const auto idx = source.find(c.name);
    if (!idx) {
      throw SchemaMismatch("data lacks model column '" + c.name + "'");
    }
    const ColumnSpec& src = source.column(*idx);
    if (src.kind != c.kind || src.cardinality != c.cardinality) {
      throw SchemaMismatch("column '" + c.name + "' differs between data and model");
    }
    source_index_.push_back(*idx);
    double center = std::numeric_limits<double>::quiet_NaN();
    for (auto name : kLogCenteredColumns) {
      if (c.name == name) center = params.mean_log(name);
    }
    center_.push_back(center);
  }
}

void RowTransformer::apply(std::span<const double> source_row,
                           std::span<double> out) const {
  for (std::size_t j = 0; j < source_index_.size(); ++j) {
    const double v = source_row[source_index_[j]];
    out[j] = std::isnan(center_[j]) ? v : log1p_center(v, center_[j]);
  }
}

}  // namespace instapop
