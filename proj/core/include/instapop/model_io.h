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

#ifndef INSTAPOP_MODEL_IO_H_
#define INSTAPOP_MODEL_IO_H_

#include <filesystem>
#include <string>
#include <string_view>

#include "instapop/gbm.h"

namespace instapop {

// First line of every model file.
inline constexpr std::string_view kModelMagic = "INSTAPOP-MODEL";
inline constexpr int kModelVersion = 1;

// Text container: a magic line "INSTAPOP-MODEL 1" followed by one JSON
// document with the header fields (schema_hash, mask, config, base_score,
// transform, schema, bins) and per-tree arrays (split_column, categorical,
// threshold_bin, threshold, categories, left, right, leaf_value, cover).
// Doubles are written in shortest round-trip form, so load(save(m)) predicts
// bit-identically.
std::string serialize_model(const TreeEnsemble& model);
// Throws ModelFormatError on bad magic, version or structure.
TreeEnsemble deserialize_model(std::string_view text);

void save_model(const TreeEnsemble& model, const std::filesystem::path& path);
TreeEnsemble load_model(const std::filesystem::path& path);

}  // namespace instapop

#endif  // INSTAPOP_MODEL_IO_H_
