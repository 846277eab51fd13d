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

#include "instapop/explain.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "instapop/error.h"

namespace instapop {

namespace {

struct PathElement {
  int feature;
  double zero_fraction;
  double one_fraction;
  double weight;
};

void extend_path(PathElement* path, int depth, double zero_fraction,
                 double one_fraction, int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / (depth + 1);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / (depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * (depth + 1) / ((i + 1) * one);
      next = tmp - path[i].weight * zero * (depth - i) / (depth + 1);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total weight of the path with element `index` removed.
double unwound_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * (depth - i) / (depth + 1);
    } else if (zero != 0.0) {
      total += path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  return total;
}

std::pair<double, double> child_fractions(const Tree& tree,
                                          const TreeNode& node) {
  const double l = tree.nodes[node.left].cover;
  const double r = tree.nodes[node.right].cover;
  const double w = node.cover > 0.0 ? node.cover : l + r;
  if (!(w > 0.0)) return {0.5, 0.5};
  return {l / w, r / w};
}

class ShapRecursion {
 public:
  ShapRecursion(const Tree& tree, std::span<const double> row,
                std::span<double> phi, std::vector<PathElement>& buffer)
      : tree_(tree), row_(row), phi_(phi), buffer_(buffer) {}

  void run() { recurse(0, buffer_.data(), 0, 1.0, 1.0, -1); }

 private:
  void recurse(std::int32_t node_index, PathElement* parent_path, int depth,
               double zero_fraction, double one_fraction, int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero_fraction, one_fraction, feature);

    const TreeNode& node = tree_.nodes[node_index];
    if (node.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_sum(path, depth, i);
        const PathElement& el = path[i];
        phi_[el.feature] +=
            w * (el.one_fraction - el.zero_fraction) * node.leaf_value;
      }
      return;
    }

    const bool left = node.goes_left(row_[node.split_column]);
    const auto [lf, rf] = child_fractions(tree_, node);
    const std::int32_t hot = left ? node.left : node.right;
    const std::int32_t cold = left ? node.right : node.left;
    const double hot_fraction = left ? lf : rf;
    const double cold_fraction = left ? rf : lf;

    double incoming_zero = 1.0, incoming_one = 1.0;
    int k = 1;
    for (; k <= depth; ++k) {
      if (path[k].feature == node.split_column) break;
    }
    if (k <= depth) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, depth, k);
      --depth;
    }
    recurse(hot, path, depth + 1, hot_fraction * incoming_zero, incoming_one,
            node.split_column);
    recurse(cold, path, depth + 1, cold_fraction * incoming_zero, 0.0,
            node.split_column);
  }

  const Tree& tree_;
  std::span<const double> row_;
  std::span<double> phi_;
  std::vector<PathElement>& buffer_;
};

void ensure_buffer(std::vector<PathElement>& buffer, int tree_depth) {
  const std::size_t d = static_cast<std::size_t>(tree_depth) + 2;
  const std::size_t need = d * (d + 1) / 2 + d;
  if (buffer.size() < need) buffer.resize(need);
}

double expected_from(const Tree& tree, std::int32_t idx) {
  const TreeNode& node = tree.nodes[idx];
  if (node.is_leaf()) return node.leaf_value;
  const auto [lf, rf] = child_fractions(tree, node);
  return lf * expected_from(tree, node.left) + rf * expected_from(tree, node.right);
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, r.ptr);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

double tree_expected_value(const Tree& tree) {
  if (tree.nodes.empty()) return 0.0;
  return expected_from(tree, 0);
}

double tree_shap_single(const Tree& tree, std::span<const double> row,
                        std::span<double> phi) {
  if (tree.nodes.empty()) return 0.0;
  std::vector<PathElement> buffer;
  ensure_buffer(buffer, tree.depth());
  ShapRecursion(tree, row, phi, buffer).run();
  return tree_expected_value(tree);
}

Explanation tree_shap(const TreeEnsemble& model, std::span<const double> row) {
  if (row.size() != model.num_features()) {
    throw SchemaMismatch("row width " + std::to_string(row.size()) +
                         " does not match model width " +
                         std::to_string(model.num_features()));
  }
  Explanation out;
  out.phi.assign(model.num_features(), 0.0);
  out.base_value = model.base_score();
  std::vector<PathElement> buffer;
  for (const Tree& tree : model.trees()) {
    ensure_buffer(buffer, tree.depth());
    ShapRecursion(tree, row, out.phi, buffer).run();
    out.base_value += tree_expected_value(tree);
  }
  out.prediction = model.predict_row(row);
  return out;
}

double local_accuracy_residual(const Explanation& e) {
  double total = e.base_value;
  for (double v : e.phi) total += v;
  return std::abs(total - e.prediction) / std::max(1.0, std::abs(e.prediction));
}

std::vector<double> expand_phi(std::span<const double> phi,
                               const FeatureSchema& model,
                               const FeatureSchema& target) {
  if (phi.size() != model.size()) {
    throw InvalidArgument("phi width does not match model schema");
  }
  std::vector<double> out(target.size(), 0.0);
  for (std::size_t j = 0; j < model.size(); ++j) {
    const auto idx = target.find(model.column(j).name);
    if (!idx) {
      throw SchemaMismatch("target schema lacks column '" +
                           model.column(j).name + "'");
    }
    out[*idx] = phi[j];
  }
  return out;
}

AttributionAccumulator::AttributionAccumulator(std::size_t n_columns)
    : sum_abs_(n_columns, 0.0), pos_sum_(n_columns, 0.0),
      neg_sum_(n_columns, 0.0), pos_count_(n_columns, 0),
      neg_count_(n_columns, 0) {}

void AttributionAccumulator::add(std::span<const double> phi) {
  if (phi.size() != n_columns()) {
    throw InvalidArgument("phi width does not match accumulator");
  }
  ++n_rows_;
  for (std::size_t j = 0; j < phi.size(); ++j) {
    const double v = phi[j];
    sum_abs_[j] += std::abs(v);
    if (v > 0.0) {
      pos_sum_[j] += v;
      ++pos_count_[j];
    } else if (v < 0.0) {
      neg_sum_[j] += v;
      ++neg_count_[j];
    }
  }
}

void AttributionAccumulator::merge(const AttributionAccumulator& other) {
  if (other.n_columns() != n_columns()) {
    throw InvalidArgument("cannot merge accumulators of different width");
  }
  n_rows_ += other.n_rows_;
  for (std::size_t j = 0; j < n_columns(); ++j) {
    sum_abs_[j] += other.sum_abs_[j];
    pos_sum_[j] += other.pos_sum_[j];
    neg_sum_[j] += other.neg_sum_[j];
    pos_count_[j] += other.pos_count_[j];
    neg_count_[j] += other.neg_count_[j];
  }
}

std::vector<double> AttributionAccumulator::mean_abs() const {
  std::vector<double> out(n_columns(), 0.0);
  if (n_rows_ == 0) return out;
  for (std::size_t j = 0; j < n_columns(); ++j) {
    out[j] = sum_abs_[j] / static_cast<double>(n_rows_);
  }
  return out;
}

std::vector<SignSplit> AttributionAccumulator::sign_split() const {
  std::vector<SignSplit> out(n_columns());
  for (std::size_t j = 0; j < n_columns(); ++j) {
    if (pos_count_[j] > 0) out[j].pos_mean = pos_sum_[j] / pos_count_[j];
    if (neg_count_[j] > 0) out[j].neg_mean = neg_sum_[j] / neg_count_[j];
  }
  return out;
}

double GroupAttribution::total() const {
  double t = 0.0;
  for (double v : value) t += v;
  return t;
}

double GroupAttribution::share(GroupCode g) const {
  const double t = total();
  return t > 0.0 ? (*this)[g] / t : 0.0;
}

namespace {

AttributionAccumulator accumulate(std::span<const Explanation> explanations) {
  if (explanations.empty()) {
    throw InvalidArgument("aggregation needs at least one explanation");
  }
  AttributionAccumulator acc(explanations.front().phi.size());
  for (const auto& e : explanations) acc.add(e.phi);
  return acc;
}

}  // namespace

GroupAttribution aggregate_groups(std::span<const Explanation> explanations,
                                  const FeatureSchema& schema, GroupMask mask) {
  const auto acc = accumulate(explanations);
  return aggregate_groups(acc.mean_abs(), schema, mask);
}

GroupAttribution aggregate_groups(std::span<const double> mean_abs,
                                  const FeatureSchema& schema, GroupMask mask) {
  if (mean_abs.size() != schema.size()) {
    throw InvalidArgument("attribution width does not match schema");
  }
  GroupAttribution out;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const GroupCode g = schema.column(j).group;
    if (mask.contains(g)) out.value[group_index(g)] += mean_abs[j];
  }
  return out;
}

std::vector<SignSplit> sign_split(std::span<const Explanation> explanations) {
  return accumulate(explanations).sign_split();
}

std::vector<double> mean_abs_phi(std::span<const Explanation> explanations) {
  return accumulate(explanations).mean_abs();
}

ModelAttributionTable make_attribution_table(std::string model_name,
                                             const FeatureSchema& schema,
                                             std::vector<double> mean_abs) {
  if (mean_abs.size() != schema.size()) {
    throw InvalidArgument("attribution width does not match schema");
  }
  ModelAttributionTable t;
  t.model = std::move(model_name);
  for (const auto& c : schema.columns()) {
    t.columns.push_back(c.name);
    t.groups.push_back(c.group);
  }
  t.mean_abs = std::move(mean_abs);
  return t;
}

std::vector<RankedFeature> cross_model_top_k(
    std::span<const ModelAttributionTable> tables, std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be positive");
  if (tables.empty()) throw InvalidArgument("need at least one model table");
  struct Acc {
    GroupCode group;
    double sum = 0.0;
    int presence = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& t : tables) {
    if (t.columns.size() != t.mean_abs.size() ||
        t.groups.size() != t.columns.size()) {
      throw InvalidArgument("malformed attribution table '" + t.model + "'");
    }
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      auto [it, inserted] = acc.try_emplace(t.columns[j], Acc{t.groups[j]});
      it->second.sum += t.mean_abs[j];
      ++it->second.presence;
    }
  }
  std::vector<RankedFeature> ranking;
  ranking.reserve(acc.size());
  for (const auto& [name, a] : acc) {
    ranking.push_back({name, a.group, a.sum / a.presence, a.presence});
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const RankedFeature& a, const RankedFeature& b) {
                     return a.score > b.score;
                   });
  if (ranking.size() > k) ranking.resize(k);
  return ranking;
}

void write_phi_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                   std::span<const std::uint64_t> row_ids,
                   std::span<const Explanation> explanations) {
  if (row_ids.size() != explanations.size()) {
    throw InvalidArgument("row id count does not match explanations");
  }
  auto out = open_csv(path);
  std::string line = "row_id,base_value,prediction";
  for (const auto& c : schema.columns()) line += "," + c.name;
  out << line << '\n';
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    const Explanation& e = explanations[i];
    line = std::to_string(row_ids[i]);
    line.push_back(',');
    append_double(line, e.base_value);
    line.push_back(',');
    append_double(line, e.prediction);
    for (double v : e.phi) {
      line.push_back(',');
      append_double(line, v);
    }
    out << line << '\n';
  }
}

void write_group_csv(const std::filesystem::path& path,
                     const GroupAttribution& groups) {
  auto out = open_csv(path);
  out << "group,name,mean_abs_shap\n";
  for (const auto& g : kFeatureGroups) {
    std::string line(1, g.letter);
    line += ",";
    line += g.display_name;
    line += ",";
    append_double(line, groups[g.code]);
    out << line << '\n';
  }
}

void write_sign_split_csv(const std::filesystem::path& path,
                          const FeatureSchema& schema,
                          std::span<const SignSplit> split) {
  if (split.size() != schema.size()) {
    throw InvalidArgument("sign split width does not match schema");
  }
  auto out = open_csv(path);
  out << "column,group,pos_mean,neg_mean\n";
  for (std::size_t j = 0; j < split.size(); ++j) {
    std::string line = schema.column(j).name;
    line += ",";
    line.push_back(group_letter(schema.column(j).group));
    line += ",";
    append_double(line, split[j].pos_mean);
    line += ",";
    append_double(line, split[j].neg_mean);
    out << line << '\n';
  }
}

void write_top_k_csv(const std::filesystem::path& path,
                     std::span<const RankedFeature> ranking) {
  auto out = open_csv(path);
  out << "rank,column,group,score,presence\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    std::string line = std::to_string(i + 1) + "," + ranking[i].column + ",";
    line.push_back(group_letter(ranking[i].group));
    line += ",";
    append_double(line, ranking[i].score);
    line += "," + std::to_string(ranking[i].presence);
    out << line << '\n';
  }
}

}  // namespace instapop
