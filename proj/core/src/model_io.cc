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

#include "instapop/model_io.h"

#include <fstream>
#include <sstream>

#include "instapop/error.h"
#include "json.hpp"

namespace instapop {

namespace {

using ojson = nlohmann::ordered_json;

ojson bins_to_json(const BinMapper& bins) {
  ojson cols = ojson::array();
  for (std::size_t j = 0; j < bins.size(); ++j) {
    const ColumnBins& c = bins.column(j);
    cols.push_back({{"categorical", c.categorical},
                    {"n_bins", c.n_bins},
                    {"upper_bounds", c.upper_bounds}});
  }
  return cols;
}

BinMapper bins_from_json(const nlohmann::json& doc) {
  std::vector<ColumnBins> cols;
  for (const auto& c : doc) {
    ColumnBins b;
    b.categorical = c.at("categorical").get<bool>();
    b.n_bins = c.at("n_bins").get<std::uint32_t>();
    b.upper_bounds = c.at("upper_bounds").get<std::vector<double>>();
    if (!b.categorical && b.upper_bounds.size() + 1 != b.n_bins) {
      throw ModelFormatError("bin count does not match bin bounds");
    }
    cols.push_back(std::move(b));
  }
  return BinMapper(std::move(cols));
}

ojson tree_to_json(const Tree& tree) {
  ojson split = ojson::array(), cat = ojson::array(), tbin = ojson::array(),
        thr = ojson::array(), cats = ojson::array(), left = ojson::array(),
        right = ojson::array(), value = ojson::array(), cover = ojson::array();
  for (const TreeNode& n : tree.nodes) {
    split.push_back(n.split_column);
    cat.push_back(n.categorical ? 1 : 0);
    tbin.push_back(n.threshold_bin);
    thr.push_back(n.threshold);
    ojson set = ojson::array();
    if (n.categorical) {
      for (std::uint32_t c = 0; c < 256; ++c) {
        if (category_in(n.left_categories, c)) set.push_back(c);
      }
    }
    cats.push_back(std::move(set));
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.leaf_value);
    cover.push_back(n.cover);
  }
  return ojson{{"split_column", split}, {"categorical", cat},
               {"threshold_bin", tbin}, {"threshold", thr},
               {"categories", cats},   {"left", left},
               {"right", right},       {"leaf_value", value},
               {"cover", cover}};
}

Tree tree_from_json(const nlohmann::json& doc) {
  const auto split = doc.at("split_column").get<std::vector<std::int32_t>>();
  const auto cat = doc.at("categorical").get<std::vector<int>>();
  const auto tbin = doc.at("threshold_bin").get<std::vector<std::uint32_t>>();
  const auto thr = doc.at("threshold").get<std::vector<double>>();
  const auto& cats = doc.at("categories");
  const auto left = doc.at("left").get<std::vector<std::int32_t>>();
  const auto right = doc.at("right").get<std::vector<std::int32_t>>();
  const auto value = doc.at("leaf_value").get<std::vector<double>>();
  const auto cover = doc.at("cover").get<std::vector<double>>();
  const std::size_t n = split.size();
  if (cat.size() != n || tbin.size() != n || thr.size() != n ||
      cats.size() != n || left.size() != n || right.size() != n ||
      value.size() != n || cover.size() != n) {
    throw ModelFormatError("tree arrays have inconsistent lengths");
  }
  Tree tree;
  tree.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode& node = tree.nodes[i];
    node.split_column = split[i];
    node.categorical = cat[i] != 0;
    node.threshold_bin = tbin[i];
    node.threshold = thr[i];
    for (const auto& c : cats[i]) {
      const auto code = c.get<std::uint32_t>();
      if (code >= 256) throw ModelFormatError("category code out of range");
      category_add(node.left_categories, code);
    }
    node.left = left[i];
    node.right = right[i];
    node.leaf_value = value[i];
    node.cover = cover[i];
  }
  return tree;
}

}  // namespace

std::string serialize_model(const TreeEnsemble& model) {
  ojson doc;
  doc["schema_hash"] = hash_to_hex(model.schema_hash());
  doc["mask"] = model.mask().render();
  doc["config"] = ojson::parse(model.config().to_json());
  doc["base_score"] = model.base_score();
  doc["transform"] = ojson::parse(model.transform().to_json());
  doc["schema"] = ojson::parse(model.schema().to_json());
  doc["bins"] = bins_to_json(model.bin_mapper());
  ojson trees = ojson::array();
  for (const Tree& t : model.trees()) trees.push_back(tree_to_json(t));
  doc["trees"] = std::move(trees);

  std::string out(kModelMagic);
  out += ' ';
  out += std::to_string(kModelVersion);
  out += '\n';
  out += doc.dump();
  out += '\n';
  return out;
}

TreeEnsemble deserialize_model(std::string_view text) {
  const std::size_t nl = text.find('\n');
  const std::string_view first = text.substr(0, nl);
  const std::string expected =
      std::string(kModelMagic) + " " + std::to_string(kModelVersion);
  if (first.substr(0, kModelMagic.size()) != kModelMagic) {
    throw ModelFormatError("not a model file (bad magic header)");
  }
  if (first != expected) {
    throw ModelFormatError("unsupported model version: '" + std::string(first) +
                           "'");
  }
  if (nl == std::string_view::npos) throw ModelFormatError("truncated model file");
  try {
    const auto doc = nlohmann::json::parse(text.substr(nl + 1));
    FeatureSchema schema = FeatureSchema::from_json(doc.at("schema").dump());
    if (hash_from_hex(doc.at("schema_hash").get<std::string>()) != schema.hash()) {
      throw ModelFormatError("schema_hash does not match embedded schema");
    }
    const std::string mask_text = doc.at("mask").get<std::string>();
    const GroupMask mask = mask_text.empty() ? GroupMask() : parse_mask(mask_text);
    GbmConfig config = GbmConfig::from_json(doc.at("config").dump());
    TransformParams transform =
        TransformParams::from_json(doc.at("transform").dump());
    BinMapper bins = bins_from_json(doc.at("bins"));
    if (bins.size() != schema.size()) {
      throw ModelFormatError("bin mapper width does not match schema");
    }
    std::vector<Tree> trees;
    for (const auto& t : doc.at("trees")) trees.push_back(tree_from_json(t));
    return TreeEnsemble(std::move(schema), mask, config,
                        doc.at("base_score").get<double>(), std::move(bins),
                        std::move(transform), std::move(trees));
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("corrupt model file: ") + e.what());
  } catch (const SchemaMismatch& e) {
    throw ModelFormatError(std::string("corrupt model schema: ") + e.what());
  } catch (const ParseError& e) {
    throw ModelFormatError(std::string("corrupt model mask: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ModelFormatError(std::string("corrupt model: ") + e.what());
  }
}

void save_model(const TreeEnsemble& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << serialize_model(model);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

TreeEnsemble load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace instapop
