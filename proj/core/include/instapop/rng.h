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

#ifndef INSTAPOP_RNG_H_
#define INSTAPOP_RNG_H_

#include <cstdint>
#include <span>
#include <vector>

namespace instapop {

// SplitMix64 finalizer (Stafford variant 13). Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so results do not depend on evaluation order or
// thread count. The construction is "SplitMix64 in counter mode":
//
//   key(seed, stream)  = mix64(seed + golden * (stream + 1))
//   bits(counter)      = mix64(key ^ mix64(counter + golden))
//
// with golden = 0x9E3779B97F4A7C15.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed + kGolden * (stream + 1))) {}

  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ ^ mix64(counter + kGolden));
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe as a log argument.
  double uniform_open0(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on counters (2c, 2c+1).
  double normal(std::uint64_t counter) const;

  // Poisson draw by sequential inversion, consuming one uniform.
  std::uint32_t poisson(std::uint64_t counter, double lambda) const;

  // Uniform integer in [0, n) by rejection, consuming counters starting at
  // `counter` (at most a handful on average).
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const;

 private:
  std::uint64_t key_;
};

// Sequential stream on top of CounterRng, for shuffles and sampling.
class SeqRng {
 public:
  SeqRng(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}

  std::uint64_t next() { return rng_.bits(counter_++); }
  double uniform() { return rng_.uniform(counter_++); }

  // Uniform integer in [0, n), n > 0, unbiased.
  std::uint64_t below(std::uint64_t n);

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates permutation of 0..n-1.
std::vector<std::uint32_t> seeded_permutation(std::size_t n, std::uint64_t seed,
                                              std::uint64_t stream);

// k distinct indices from 0..n-1, returned in ascending order.
std::vector<std::uint32_t> seeded_sample(std::size_t n, std::size_t k,
                                         std::uint64_t seed,
                                         std::uint64_t stream);

}  // namespace instapop

#endif  // INSTAPOP_RNG_H_
