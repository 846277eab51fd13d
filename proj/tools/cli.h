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

#ifndef INSTAPOP_TOOLS_CLI_H_
#define INSTAPOP_TOOLS_CLI_H_

#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace instapop::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::string_view kToolVersion = "0.1.0";

// Runs "instapop <args...>" (args excludes the program name) and returns the
// exit code. Normal output goes to out, diagnostics and progress to err.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

// Published per-mask means on a private 1M-post corpus. Printed next to
// ablation summaries as annotations only.
struct ReferenceRow {
  std::string_view mask;
  double src;
  double rmse;
  double r2;
  std::string_view predict_ms;
};

std::span<const ReferenceRow> reference_table();

inline constexpr std::string_view kReferenceLabel =
    "reference (published, private data, not a test target)";

}  // namespace instapop::cli

#endif  // INSTAPOP_TOOLS_CLI_H_
