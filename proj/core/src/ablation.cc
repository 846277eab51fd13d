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

#include "instapop/ablation.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>

#include "instapop/error.h"
#include "instapop/featurize.h"
#include "instapop/parallel.h"
#include "instapop/pipeline.h"
#include "instapop/rng.h"
#include "json.hpp"

namespace instapop {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::uint64_t kFoldStream = 0x464F4C44;  // "FOLD"
constexpr std::uint64_t kShapStream = 0x53484150;  // "SHAP"

std::string_view fold_mode_name(FoldMode m) {
  return m == FoldMode::kShuffled ? "shuffled" : "temporal";
}
std::string_view centering_name(CenteringMode m) {
  return m == CenteringMode::kFoldLocal ? "fold_local" : "global";
}
std::string_view shap_source_name(ShapSource s) {
  return s == ShapSource::kTestFold ? "test_fold" : "train_fold";
}

ojson plan_json(const AblationPlan& plan) {
  ojson j;
  ojson masks = ojson::array();
  for (GroupMask m : plan.combinations) masks.push_back(m.render());
  j["combinations"] = std::move(masks);
  j["n_folds"] = plan.n_folds;
  j["seed"] = plan.seed;
  j["gbm"] = ojson::parse(plan.gbm.to_json());
  j["shap_rows_per_fold"] = plan.shap_rows_per_fold;
  j["top_k"] = plan.top_k;
  j["fold_mode"] = fold_mode_name(plan.fold_mode);
  j["centering"] = centering_name(plan.centering);
  j["shap_source"] = shap_source_name(plan.shap_source);
  return j;
}

// Shared, read-only state of one fold.
struct FoldData {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> test;
  std::vector<std::uint32_t> shap_rows;
  TransformParams params;
  std::vector<double> y_train;
  std::vector<double> y_test;
  std::vector<ColumnBins> bins;                    // per dataset column
  std::vector<std::vector<std::uint8_t>> binned;  // per dataset column
  std::uint64_t checksum = 0;
};

FoldData prepare_fold(const Dataset& ds, const AblationPlan& plan,
                      std::span<const std::uint32_t> folds, int fold,
                      const TransformParams& global_params) {
  FoldData fd;
  for (std::uint32_t i = 0; i < folds.size(); ++i) {
    (folds[i] == static_cast<std::uint32_t>(fold) ? fd.test : fd.train)
        .push_back(i);
  }
  fd.checksum = rows_checksum(fd.test);
  fd.params = plan.centering == CenteringMode::kGlobal
                  ? global_params
                  : fit_transform_params(ds, fd.train);
  fd.y_train = transformed_targets(ds, fd.train, fd.params);
  fd.y_test = transformed_targets(ds, fd.test, fd.params);

  const auto& pool =
      plan.shap_source == ShapSource::kTestFold ? fd.test : fd.train;
  const std::size_t k = static_cast<std::size_t>(
      std::min<std::uint64_t>(plan.shap_rows_per_fold, pool.size()));
  for (std::uint32_t idx :
       seeded_sample(pool.size(), k, plan.seed, kShapStream + fold)) {
    fd.shap_rows.push_back(pool[idx]);
  }

  const FeatureSchema& schema = ds.schema();
  fd.bins.resize(schema.size());
  fd.binned.resize(schema.size());
  parallel_for(schema.size(), 8, [&](std::size_t begin, std::size_t end) {
    std::vector<double> values(fd.train.size());
    for (std::size_t j = begin; j < end; ++j) {
      const ColumnSpec& spec = schema.column(j);
      double center = std::numeric_limits<double>::quiet_NaN();
      for (auto name : kLogCenteredColumns) {
        if (spec.name == name) center = fd.params.mean_log(name);
      }
      for (std::size_t i = 0; i < fd.train.size(); ++i) {
        const double v = ds.value(fd.train[i], j);
        values[i] = std::isnan(center) ? v : log1p_center(v, center);
      }
      fd.bins[j] = build_column_bins(values, spec, plan.gbm.max_bins);
      auto& out = fd.binned[j];
      out.resize(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = fd.bins[j].bin(values[i]);
      }
    }
  });
  return fd;
}

double metric_or_nan(const std::function<double()>& f) {
  try {
    return f();
  } catch (const UndefinedCorrelation&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct UnitResult {
  FoldEntry entry;
  AttributionAccumulator attributions;
};

UnitResult run_unit(const Dataset& ds, const AblationPlan& plan,
                    const FoldData& fd, GroupMask mask, int fold,
                    bool inner_parallel) {
  const FeatureSchema& source = ds.schema();
  const FeatureSchema model_schema = project_checked(source, mask);

  std::vector<std::size_t> idx;
  idx.reserve(model_schema.size());
  BinnedView view;
  view.n_rows = fd.train.size();
  std::vector<ColumnBins> bins;
  for (const auto& c : model_schema.columns()) {
    const std::size_t j = source.index_of(c.name);
    idx.push_back(j);
    view.columns.emplace_back(fd.binned[j]);
    bins.push_back(fd.bins[j]);
  }
  const BinMapper mapper(std::move(bins));

  UnitResult out{FoldEntry{}, AttributionAccumulator(model_schema.size())};
  FoldEntry& e = out.entry;
  e.mask = mask;
  e.n_train = fd.train.size();
  e.fold_checksum = fd.checksum;
  e.eval.fold_id = fold;

  Stopwatch sw;
  FitOptions fit_options;
  fit_options.parallel = inner_parallel;
  auto model = [&] {
    try {
      return fit_binned(model_schema, mapper, view, fd.y_train, plan.gbm,
                        fit_options, fd.params);
    } catch (const Error& err) {
      throw TrainingError("mask " + mask.render() + ", fold " +
                          std::to_string(fold) + ": " + err.what());
    }
  }();
  e.eval.train_seconds = sw.seconds();

  const RowTransformer tf(source, model_schema, fd.params);
  std::vector<double> buf(model_schema.size());
  std::vector<double> yhat(fd.test.size());
  sw.reset();
  for (std::size_t i = 0; i < fd.test.size(); ++i) {
    tf.apply(ds.row(fd.test[i]), buf);
    yhat[i] = model.predict_row(buf);
  }
  const double elapsed = sw.seconds();
  e.eval.n_eval = fd.test.size();
  e.eval.predict_ms_per_row =
      fd.test.empty() ? 0.0 : elapsed * 1e3 / static_cast<double>(fd.test.size());
  e.eval.src = metric_or_nan([&] { return spearman(fd.y_test, yhat); });
  e.eval.rmse = rmse(fd.y_test, yhat);
  e.eval.r2 = metric_or_nan([&] { return r_squared(fd.y_test, yhat); });

  for (std::uint32_t r : fd.shap_rows) {
    tf.apply(ds.row(r), buf);
    const Explanation ex = tree_shap(model, buf);
    const double residual = local_accuracy_residual(ex);
    e.max_local_residual = std::max(e.max_local_residual, residual);
    if (!(residual <= kLocalAccuracyTolerance)) ++e.local_violations;
    out.attributions.add(ex.phi);
  }
  e.shap_rows = fd.shap_rows.size();
  return out;
}

void append_double(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, r.ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void AblationPlan::validate() const {
  if (combinations.empty()) throw InvalidArgument("plan has no combinations");
  std::set<std::uint8_t> seen;
  for (GroupMask m : combinations) {
    if (m.empty()) throw InvalidArgument("plan contains an empty mask");
    if (!seen.insert(m.bits()).second) {
      throw InvalidArgument("plan repeats mask " + m.render());
    }
  }
  if (n_folds < 2) throw InvalidArgument("n_folds must be at least 2");
  if (top_k == 0) throw InvalidArgument("top_k must be positive");
  gbm.validate();
}

std::string AblationPlan::to_json() const { return plan_json(*this).dump(); }

AblationPlan default_plan() {
  static constexpr std::string_view kMasks[] = {
      "T",     "C",      "A",      "CT",     "AT",      "AC",     "YCT",
      "ICT",   "YICT",   "PCT",    "ECT",    "YPCT",    "IPCT",   "YECT",
      "IECT",  "YIPCT",  "EPCT",   "YIECT",  "YEPCT",   "IEPCT",  "YIEPCT",
      "ACT",   "PACT",   "EACT",   "IPACT",  "YEACT",   "YPACT",  "IEACT",
      "YACT",  "EPACT",  "YIPACT", "IACT",   "YEPACT",  "YIEACT", "IEPACT",
      "YIEPACT", "YIACT"};
  AblationPlan plan;
  for (auto m : kMasks) plan.combinations.push_back(parse_mask(m));
  return plan;
}

std::vector<std::uint32_t> assign_folds(std::size_t n_rows, int n_folds,
                                        std::uint64_t seed, FoldMode mode) {
  if (n_folds < 1) throw InvalidArgument("n_folds must be positive");
  std::vector<std::uint32_t> folds(n_rows);
  const auto k = static_cast<std::uint64_t>(n_folds);
  if (mode == FoldMode::kTemporal) {
    for (std::size_t i = 0; i < n_rows; ++i) {
      folds[i] = static_cast<std::uint32_t>(i * k / n_rows);
    }
  } else {
    const auto perm = seeded_permutation(n_rows, seed, kFoldStream);
    for (std::size_t i = 0; i < n_rows; ++i) {
      folds[perm[i]] = static_cast<std::uint32_t>(i % k);
    }
  }
  return folds;
}

std::uint64_t rows_checksum(std::span<const std::uint32_t> rows) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint32_t r : rows) {
    for (int b = 0; b < 4; ++b) {
      h ^= (r >> (8 * b)) & 0xFFu;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::size_t AblationReport::n_entries() const {
  std::size_t n = 0;
  for (const auto& m : masks) n += m.folds.size();
  return n;
}

const MaskResult& AblationReport::find(GroupMask mask) const {
  for (const auto& m : masks) {
    if (m.mask == mask) return m;
  }
  throw InvalidArgument("mask " + mask.render() + " is not in the report");
}

std::string AblationReport::to_json() const {
  ojson j;
  j["format"] = "instapop-ablation-report";
  j["version"] = 1;
  j["plan"] = plan_json(plan);
  j["dataset"] = {{"n_rows", n_rows},
                  {"checksum", hash_to_hex(dataset_checksum)},
                  {"schema_hash", hash_to_hex(schema.hash())}};
  j["schema"] = ojson::parse(schema.to_json());
  j["local_accuracy"] = {{"tolerance", kLocalAccuracyTolerance},
                         {"max_residual", max_local_residual},
                         {"violations", local_violations}};
  ojson masks_json = ojson::array();
  for (const auto& m : masks) {
    ojson mj;
    mj["mask"] = m.mask.render();
    mj["n_columns"] = m.n_columns;
    ojson folds = ojson::array();
    for (const auto& f : m.folds) {
      folds.push_back({{"fold_id", f.eval.fold_id},
                       {"n_train", f.n_train},
                       {"n_eval", f.eval.n_eval},
                       {"fold_checksum", hash_to_hex(f.fold_checksum)},
                       {"src", f.eval.src},
                       {"rmse", f.eval.rmse},
                       {"r2", f.eval.r2},
                       {"shap_rows", f.shap_rows},
                       {"max_local_residual", f.max_local_residual},
                       {"local_violations", f.local_violations}});
    }
    mj["folds"] = std::move(folds);
    mj["src"] = {{"mean", m.src.mean}, {"sd", m.src.sd}};
    mj["rmse"] = {{"mean", m.rmse.mean}, {"sd", m.rmse.sd}};
    mj["r2"] = {{"mean", m.r2.mean}, {"sd", m.r2.sd}};
    ojson groups;
    for (const auto& g : kFeatureGroups) {
      groups[std::string(1, g.letter)] = m.groups[g.code];
    }
    mj["group_attribution"] = std::move(groups);
    mj["mean_abs_phi"] = m.mean_abs_phi;
    ojson pos = ojson::array(), neg = ojson::array();
    for (const auto& s : m.sign_split) {
      pos.push_back(s.pos_mean);
      neg.push_back(s.neg_mean);
    }
    mj["sign_split"] = {{"pos_mean", std::move(pos)}, {"neg_mean", std::move(neg)}};
    masks_json.push_back(std::move(mj));
  }
  j["masks"] = std::move(masks_json);
  ojson top = ojson::array();
  for (const auto& r : top_k) {
    top.push_back({{"column", r.column},
                   {"group", std::string(1, group_letter(r.group))},
                   {"score", r.score},
                   {"presence", r.presence}});
  }
  j["top_k"] = std::move(top);
  return j.dump(1) + "\n";
}

AblationReport run(const AblationPlan& plan, const Dataset& ds,
                   const RunOptions& options) {
  plan.validate();
  const std::size_t n = ds.n_rows();
  const std::size_t min_rows = static_cast<std::size_t>(plan.n_folds) *
                               static_cast<std::size_t>(plan.gbm.min_data_in_leaf);
  if (n < min_rows || n < static_cast<std::size_t>(plan.n_folds)) {
    throw InvalidArgument("ablation needs at least " + std::to_string(min_rows) +
                          " rows, dataset has " + std::to_string(n));
  }
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("dataset too large for 32-bit row indices");
  }
  for (GroupMask m : plan.combinations) project_checked(ds.schema(), m);

  const auto folds = assign_folds(n, plan.n_folds, plan.seed, plan.fold_mode);
  TransformParams global_params;
  if (plan.centering == CenteringMode::kGlobal) {
    global_params = fit_transform_params(ds, all_rows(n));
  }
  std::vector<FoldData> fold_data;
  fold_data.reserve(plan.n_folds);
  for (int f = 0; f < plan.n_folds; ++f) {
    fold_data.push_back(prepare_fold(ds, plan, folds, f, global_params));
  }

  const std::size_t n_masks = plan.combinations.size();
  const std::size_t n_units = n_masks * static_cast<std::size_t>(plan.n_folds);
  std::vector<std::optional<UnitResult>> units(n_units);
  std::mutex callback_mutex;
  const auto work = [&](std::size_t u, bool inner_parallel) {
    const std::size_t mi = u / plan.n_folds;
    const int f = static_cast<int>(u % plan.n_folds);
    units[u] = run_unit(ds, plan, fold_data[f], plan.combinations[mi], f,
                        inner_parallel);
    if (options.on_entry) {
      std::lock_guard<std::mutex> lock(callback_mutex);
      options.on_entry(units[u]->entry);
    }
  };
  if (plan.parallel) {
    parallel_for(n_units, 1, [&](std::size_t begin, std::size_t end) {
      for (std::size_t u = begin; u < end; ++u) work(u, false);
    });
  } else {
    for (std::size_t u = 0; u < n_units; ++u) work(u, true);
  }

  AblationReport report{.plan = plan,
                        .schema = ds.schema(),
                        .n_rows = n,
                        .dataset_checksum = ds.checksum()};
  std::vector<ModelAttributionTable> tables;
  for (std::size_t mi = 0; mi < n_masks; ++mi) {
    MaskResult mr;
    mr.mask = plan.combinations[mi];
    const FeatureSchema model_schema = project(ds.schema(), mr.mask);
    mr.n_columns = model_schema.size();
    AttributionAccumulator acc(model_schema.size());
    std::vector<double> src, rm, r2;
    for (int f = 0; f < plan.n_folds; ++f) {
      UnitResult& ur = *units[mi * plan.n_folds + f];
      acc.merge(ur.attributions);
      src.push_back(ur.entry.eval.src);
      rm.push_back(ur.entry.eval.rmse);
      r2.push_back(ur.entry.eval.r2);
      mr.train_seconds += ur.entry.eval.train_seconds / plan.n_folds;
      mr.predict_ms_per_row += ur.entry.eval.predict_ms_per_row / plan.n_folds;
      report.max_local_residual =
          std::max(report.max_local_residual, ur.entry.max_local_residual);
      report.local_violations += ur.entry.local_violations;
      mr.folds.push_back(ur.entry);
    }
    mr.src = summarize(src);
    mr.rmse = summarize(rm);
    mr.r2 = summarize(r2);
    mr.mean_abs_phi = acc.mean_abs();
    mr.sign_split = acc.sign_split();
    mr.groups = aggregate_groups(mr.mean_abs_phi, model_schema, mr.mask);
    tables.push_back(
        make_attribution_table(mr.mask.render(), model_schema, mr.mean_abs_phi));
    report.masks.push_back(std::move(mr));
  }
  report.top_k = cross_model_top_k(tables, plan.top_k);
  return report;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kHigher:
      return "higher";
    case Verdict::kLower:
      return "lower";
    case Verdict::kIndistinguishable:
      return "indistinguishable";
  }
  return "indistinguishable";
}

Verdict compare(const AblationReport& report, GroupMask a, GroupMask b) {
  const MaskResult& ma = report.find(a);
  const MaskResult& mb = report.find(b);
  if (a == b) return Verdict::kIndistinguishable;
  const double a_lo = ma.src.mean - 2.0 * ma.src.sd;
  const double a_hi = ma.src.mean + 2.0 * ma.src.sd;
  const double b_lo = mb.src.mean - 2.0 * mb.src.sd;
  const double b_hi = mb.src.mean + 2.0 * mb.src.sd;
  if (a_lo > b_hi) return Verdict::kHigher;
  if (a_hi < b_lo) return Verdict::kLower;
  return Verdict::kIndistinguishable;
}

void write_report(const AblationReport& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "group_attribution", ec);
  fs::create_directories(dir / "sign_split", ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  open_out(dir / "report.json") << report.to_json();

  {
    auto out = open_out(dir / "folds.csv");
    out << "mask,fold_id,n_train,n_eval,src,rmse,r2,train_seconds,"
           "predict_ms_per_row,shap_rows,max_local_residual,fold_checksum\n";
    for (const auto& m : report.masks) {
      for (const auto& f : m.folds) {
        std::string line = m.mask.render() + "," + std::to_string(f.eval.fold_id) +
                           "," + std::to_string(f.n_train) + "," +
                           std::to_string(f.eval.n_eval);
        for (double v : {f.eval.src, f.eval.rmse, f.eval.r2, f.eval.train_seconds,
                         f.eval.predict_ms_per_row}) {
          line.push_back(',');
          append_double(line, v);
        }
        line += "," + std::to_string(f.shap_rows) + ",";
        append_double(line, f.max_local_residual);
        line += "," + hash_to_hex(f.fold_checksum);
        out << line << '\n';
      }
    }
  }
  const auto summary_line = [](const MaskResult& m) {
    std::string line;
    for (double v : {m.src.mean, m.src.sd, m.rmse.mean, m.rmse.sd, m.r2.mean,
                     m.r2.sd, m.train_seconds, m.predict_ms_per_row}) {
      line.push_back(',');
      append_double(line, v);
    }
    return line;
  };
  {
    auto out = open_out(dir / "summary.csv");
    out << "mask,src_mean,src_sd,rmse_mean,rmse_sd,r2_mean,r2_sd,"
           "train_seconds,predict_ms_per_row\n";
    for (const auto& m : report.masks) {
      out << m.mask.render() << summary_line(m) << '\n';
    }
  }
  {
    auto out = open_out(dir / "group_removed.csv");
    out << "mask,removed,src_mean,src_sd,rmse_mean,rmse_sd,r2_mean,r2_sd,"
           "train_seconds,predict_ms_per_row\n";
    const GroupMask full = GroupMask::all();
    for (const auto& m : report.masks) {
      if (m.mask == full) out << m.mask.render() << ",none" << summary_line(m) << '\n';
    }
    for (const auto& g : kFeatureGroups) {
      GroupMask reduced;
      for (const auto& h : kFeatureGroups) {
        if (h.code != g.code) reduced.insert(h.code);
      }
      for (const auto& m : report.masks) {
        if (m.mask == reduced) {
          out << m.mask.render() << ',' << g.letter << summary_line(m) << '\n';
        }
      }
    }
  }
  for (const auto& m : report.masks) {
    const std::string name = m.mask.render() + ".csv";
    write_group_csv(dir / "group_attribution" / name, m.groups);
    write_sign_split_csv(dir / "sign_split" / name,
                         project(report.schema, m.mask), m.sign_split);
  }
  write_top_k_csv(dir / "top_k.csv", report.top_k);
}

std::vector<ModelAttributionTable> read_attribution_tables(
    const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "report.json" : path;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read '" + file.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  std::vector<ModelAttributionTable> tables;
  try {
    const auto j = ojson::parse(buf.str());
    if (j.at("format").get<std::string>() != "instapop-ablation-report") {
      throw IoError("'" + file.string() + "' is not an ablation report");
    }
    const FeatureSchema schema = FeatureSchema::from_json(j.at("schema").dump());
    for (const auto& mj : j.at("masks")) {
      const GroupMask mask = parse_mask(mj.at("mask").get<std::string>());
      tables.push_back(make_attribution_table(
          mask.render(), project(schema, mask),
          mj.at("mean_abs_phi").get<std::vector<double>>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed report '" + file.string() + "': " + e.what());
  }
  return tables;
}

}  // namespace instapop
