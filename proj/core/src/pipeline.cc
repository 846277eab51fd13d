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

#include "instapop/pipeline.h"

#include <numeric>

#include "instapop/error.h"

namespace instapop {

std::vector<std::uint32_t> all_rows(std::size_t n) {
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0u);
  return rows;
}

DenseMatrix transform_rows(const Dataset& ds, std::span<const std::uint32_t> rows,
                           const FeatureSchema& model,
                           const TransformParams& params) {
  const RowTransformer tf(ds.schema(), model, params);
  DenseMatrix m;
  m.schema_hash = model.hash();
  m.n_rows = rows.size();
  m.n_cols = model.size();
  m.values.resize(m.n_rows * m.n_cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    tf.apply(ds.row(rows[i]),
             std::span<double>(m.values.data() + i * m.n_cols, m.n_cols));
  }
  return m;
}

std::vector<double> transformed_targets(const Dataset& ds,
                                        std::span<const std::uint32_t> rows,
                                        const TransformParams& params) {
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y[i] = transform_target(ds.likes(rows[i]), params);
  }
  return y;
}

FeatureSchema project_checked(const FeatureSchema& schema, GroupMask mask) {
  for (const auto& g : kFeatureGroups) {
    if (mask.contains(g.code) && schema.group_size(g.code) == 0) {
      throw InvalidArgument(std::string("dataset has no columns for group ") +
                            g.letter);
    }
  }
  return project(schema, mask);
}

TreeEnsemble train_model(const Dataset& ds, std::span<const std::uint32_t> rows,
                         GroupMask mask, const GbmConfig& config,
                         const FitOptions& options) {
  const FeatureSchema model = project_checked(ds.schema(), mask);
  const TransformParams params = fit_transform_params(ds, rows);
  const DenseMatrix x = transform_rows(ds, rows, model, params);
  const std::vector<double> y = transformed_targets(ds, rows, params);
  return fit(model, x, y, config, options, params);
}

std::vector<double> predict_dataset(const TreeEnsemble& model, const Dataset& ds) {
  const RowTransformer tf(ds.schema(), model.schema(), model.transform());
  std::vector<double> buf(model.num_features());
  std::vector<double> out(ds.n_rows());
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    tf.apply(ds.row(i), buf);
    out[i] = model.predict_row(buf);
  }
  return out;
}

}  // namespace instapop
