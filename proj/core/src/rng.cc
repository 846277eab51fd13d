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

#include "instapop/rng.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace instapop {

double CounterRng::normal(std::uint64_t counter) const {
  const double u1 = uniform_open0(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint32_t CounterRng::poisson(std::uint64_t counter, double lambda) const {
  if (lambda <= 0.0) return 0;
  const double u = uniform(counter);
  double p = std::exp(-lambda);
  double cdf = p;
  std::uint32_t k = 0;
  // Small rates only; the tail cut keeps the loop bounded.
  while (u >= cdf && k < 1000) {
    ++k;
    p *= lambda / k;
    cdf += p;
  }
  return k;
}

std::uint64_t CounterRng::below(std::uint64_t counter, std::uint64_t n) const {
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  for (std::uint64_t c = counter;; c += 0x100000000ULL) {
    const std::uint64_t x = bits(c);
    if (x < limit) return x % n;
  }
}

std::uint64_t SeqRng::below(std::uint64_t n) {
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  for (;;) {
    const std::uint64_t x = next();
    if (x < limit) return x % n;
  }
}

std::vector<std::uint32_t> seeded_permutation(std::size_t n, std::uint64_t seed,
                                              std::uint64_t stream) {
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  SeqRng rng(seed, stream);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<std::uint32_t> seeded_sample(std::size_t n, std::size_t k,
                                         std::uint64_t seed,
                                         std::uint64_t stream) {
  k = std::min(k, n);
  std::vector<std::uint32_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<std::uint32_t>(i);
  SeqRng rng(seed, stream);
  // Partial Fisher-Yates: the first k slots become the sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace instapop
