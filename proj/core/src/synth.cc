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

#include <algorithm>
#include <cmath>
#include <numbers>

#include "instapop/error.h"
#include "instapop/featurize.h"
#include "instapop/ingest.h"
#include "instapop/rng.h"

namespace instapop {

namespace {

// Slots past the canonical columns.
constexpr std::uint64_t kSlotTimestamp = 4000;
constexpr std::uint64_t kSlotNoise = 4001;
constexpr std::uint64_t kSlotHashtagAux = 4002;

// 2018-01-01T00:00:00Z and a two-year window.
constexpr std::int64_t kEpochStart = 1514764800;
constexpr std::int64_t kEpochSpan = 2 * 365 * 86400;

struct Layout {
  std::size_t y0, iipa, e0, p_scn0, p_att0, p_env;
  std::size_t followers, following, posts, per_post, per_following;
  std::size_t filter, users_tagged, user_liked, has_geo, language, is_english,
      hashtags, words, body;
  std::size_t day, weekday, hour;
};

const Layout& layout() {
  static const Layout l = [] {
    const FeatureSchema& s = canonical_schema();
    return Layout{s.index_of("y_00"),
                  s.index_of("iipa"),
                  s.index_of("e_0000"),
                  s.index_of("p_scn_000"),
                  s.index_of("p_att_000"),
                  s.index_of("p_env"),
                  s.index_of("a_followers"),
                  s.index_of("a_following"),
                  s.index_of("a_posts"),
                  s.index_of("a_follower_per_post"),
                  s.index_of("a_follower_per_following"),
                  s.index_of("c_filter"),
                  s.index_of("c_users_tagged"),
                  s.index_of("c_user_liked"),
                  s.index_of("c_has_geolocation"),
                  s.index_of("c_language"),
                  s.index_of("c_is_english"),
                  s.index_of("c_hashtag_count"),
                  s.index_of("c_word_count"),
                  s.index_of("c_body_length"),
                  s.index_of("t_day"),
                  s.index_of("t_weekday"),
                  s.index_of("t_hour")};
  }();
  return l;
}

double heavy_count(const CounterRng& rng, std::uint64_t slot, double mu,
                   double sd, double cap) {
  const double v = std::floor(std::expm1(mu + sd * rng.normal(slot)));
  return std::clamp(v, 0.0, cap);
}

// Fills all canonical columns of one row and returns the planted scores.
std::array<double, kNumGroups> draw_row(std::uint64_t seed, std::uint64_t row,
                                        std::vector<double>& v) {
  const Layout& L = layout();
  const CounterRng rng(seed, row);
  const auto u = [&](std::uint64_t slot) { return rng.uniform(2 * slot); };
  const auto u2 = [&](std::uint64_t slot) { return rng.uniform(2 * slot + 1); };

  // Objects: persons are common, everything else rare.
  for (std::size_t k = 0; k < 80; ++k) {
    v[L.y0 + k] = rng.poisson(2 * (L.y0 + k), k == 0 ? 1.5 : 0.1);
  }
  v[L.iipa] = std::clamp(2.0 + 1.2 * rng.normal(L.iipa), -4.0, 8.0);
  for (std::size_t k = 0; k < 1000; ++k) v[L.e0 + k] = rng.normal(L.e0 + k);
  for (std::size_t k = 0; k < 365; ++k) {
    v[L.p_scn0 + k] = rng.normal(L.p_scn0 + k);
  }
  for (std::size_t k = 0; k < 102; ++k) {
    v[L.p_att0 + k] = rng.normal(L.p_att0 + k);
  }
  v[L.p_env] = u(L.p_env);

  v[L.followers] = heavy_count(rng, L.followers, 6.0, 2.0, 1e9);
  v[L.following] = heavy_count(rng, L.following, 5.5, 1.2, 7500.0);
  v[L.posts] = heavy_count(rng, L.posts, 6.0, 1.5, 1e6);

  v[L.filter] = u(L.filter) < 0.6 ? 0.0 : 1.0 + std::floor(u2(L.filter) * 41);
  v[L.users_tagged] = std::min(20u, rng.poisson(2 * L.users_tagged, 0.5));
  v[L.user_liked] = u(L.user_liked) < 0.1 ? 1.0 : 0.0;
  v[L.has_geo] = u(L.has_geo) < 0.3 ? 1.0 : 0.0;
  v[L.language] =
      u(L.language) < 0.5 ? 0.0 : 1.0 + std::floor(u2(L.language) * 72);
  v[L.is_english] = v[L.language] == 0.0 ? 1.0 : 0.0;
  v[L.hashtags] = std::floor(u(L.hashtags) * 61);
  v[L.words] = heavy_count(rng, L.words, 2.5, 1.0, 519.0);
  v[L.body] = std::clamp(v[L.words] * 6 + 1 + std::floor(u(kSlotHashtagAux) * 5),
                         1.0, 2200.0);

  const std::int64_t t =
      kEpochStart + static_cast<std::int64_t>(rng.below(2 * kSlotTimestamp,
                                                        kEpochSpan));
  const TimeParts parts = split_timestamp(std::chrono::sys_seconds{
      std::chrono::seconds{t}});
  v[L.day] = parts.day_of_month;
  v[L.weekday] = parts.weekday;
  v[L.hour] = parts.hour;

  std::array<double, kNumGroups> s{};
  s[group_index(GroupCode::kA)] = (std::log1p(v[L.followers]) - 6.0) / 2.0;
  const double h = v[L.hashtags];
  s[group_index(GroupCode::kC)] = h == 0 ? -1.0 : h <= 10 ? 0.5 : h <= 30 ? 1.0
                                                                          : -0.5;
  s[group_index(GroupCode::kT)] =
      std::sin(2.0 * std::numbers::pi * v[L.hour] / 24.0);
  const double inv_sqrt10 = 1.0 / std::sqrt(10.0);
  double se = 0.0, sp = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    se += sign * v[L.e0 + 100 * k];
    sp += sign * v[L.p_scn0 + 36 * k];
  }
  s[group_index(GroupCode::kE)] = se * inv_sqrt10;
  s[group_index(GroupCode::kP)] = sp * inv_sqrt10;
  s[group_index(GroupCode::kY)] = 0.5 * v[L.y0];
  s[group_index(GroupCode::kI)] = v[L.iipa];
  return s;
}

}  // namespace

std::array<double, kNumGroups> planted_group_scores(std::uint64_t seed,
                                                    std::uint64_t row) {
  std::vector<double> v(canonical_schema().size());
  return draw_row(seed, row, v);
}

SynthConfig author_dominant_config(std::uint64_t n_rows, std::uint64_t seed) {
  SynthConfig config;
  config.n_rows = n_rows;
  config.seed = seed;
  config.set_signal(GroupCode::kA, 1.0);
  config.set_signal(GroupCode::kC, 0.2);
  config.set_signal(GroupCode::kT, 0.1);
  config.noise_sd = 0.5;
  return config;
}

Dataset generate(const SynthConfig& config, const FeatureSchema& schema) {
  config.validate();
  const FeatureSchema& canon = canonical_schema();
  std::vector<std::size_t> source(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto idx = canon.find(schema.column(j).name);
    if (!idx || canon.column(*idx) != schema.column(j)) {
      throw InvalidArgument("generator cannot produce column '" +
                            schema.column(j).name + "'");
    }
    source[j] = *idx;
  }

  Dataset ds(schema);
  ds.reserve(config.n_rows);
  PostRecord rec;
  rec.values.resize(canon.size());
  std::vector<double> projected(schema.size());
  for (std::uint64_t r = 0; r < config.n_rows; ++r) {
    const auto scores = draw_row(config.seed, r, rec.values);
    rec = augment_ratios(std::move(rec), canon);

    double latent = kSynthBaseLevel;
    for (int g = 0; g < kNumGroups; ++g) {
      latent += config.group_signal[g] * scores[g];
    }
    if (config.noise_sd > 0) {
      latent += config.noise_sd * CounterRng(config.seed, r).normal(kSlotNoise);
    }
    latent = std::min(latent, 30.0);
    const double likes = std::round(std::expm1(latent));
    rec.likes = likes > 0 ? static_cast<std::uint64_t>(likes) : 0;

    for (std::size_t j = 0; j < source.size(); ++j) {
      projected[j] = rec.values[source[j]];
    }
    ds.append(rec.likes, projected);
  }
  return ds;
}

}  // namespace instapop
