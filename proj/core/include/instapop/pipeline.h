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

#ifndef INSTAPOP_PIPELINE_H_
#define INSTAPOP_PIPELINE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "instapop/featurize.h"
#include "instapop/gbm.h"
#include "instapop/ingest.h"
#include "instapop/schema.h"

namespace instapop {

// 0, 1, ..., n - 1.
std::vector<std::uint32_t> all_rows(std::size_t n);

// Transformed feature matrix over `model` columns for the given rows.
DenseMatrix transform_rows(const Dataset& ds, std::span<const std::uint32_t> rows,
                           const FeatureSchema& model,
                           const TransformParams& params);

std::vector<double> transformed_targets(const Dataset& ds,
                                        std::span<const std::uint32_t> rows,
                                        const TransformParams& params);

// Fits transforms on `rows`, projects onto `mask` and trains. Throws
// InvalidArgument if the dataset has no column for a group in the mask.
TreeEnsemble train_model(const Dataset& ds, std::span<const std::uint32_t> rows,
                         GroupMask mask, const GbmConfig& config,
                         const FitOptions& options = {});

// Transformed-space predictions for every row of `ds`. Throws SchemaMismatch
// if the dataset lacks a model column.
std::vector<double> predict_dataset(const TreeEnsemble& model, const Dataset& ds);

// Projection that also checks every group of `mask` has at least one column.
FeatureSchema project_checked(const FeatureSchema& schema, GroupMask mask);

}  // namespace instapop

#endif  // INSTAPOP_PIPELINE_H_
