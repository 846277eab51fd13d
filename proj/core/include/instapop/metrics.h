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

#ifndef INSTAPOP_METRICS_H_
#define INSTAPOP_METRICS_H_

#include <chrono>
#include <cstdint>
#include <span>
#include <vector>

namespace instapop {

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> a, std::span<const double> b);

// Spearman's rank correlation: Pearson correlation of average ranks.
// Throws InvalidArgument on length mismatch or n < 2, UndefinedCorrelation if
// either input is constant.
double spearman(std::span<const double> a, std::span<const double> b);

// Throws InvalidArgument on length mismatch or empty input.
double rmse(std::span<const double> y, std::span<const double> yhat);

// 1 - SS_res / SS_tot. Throws UndefinedCorrelation for constant y.
double r_squared(std::span<const double> y, std::span<const double> yhat);

// Linear-interpolated quantile, q in [0, 1]. Copies and sorts.
double quantile(std::span<const double> values, double q);

struct EvalResult {
  double src = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  double train_seconds = 0.0;
  double predict_ms_per_row = 0.0;
  int fold_id = 0;
  std::uint64_t n_eval = 0;
};

// Monotonic wall-clock timer.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  void reset() { start_ = std::chrono::steady_clock::now(); }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace instapop

#endif  // INSTAPOP_METRICS_H_
