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

#include "cli.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "CLI11.hpp"
#include "instapop/ablation.h"
#include "instapop/error.h"
#include "instapop/explain.h"
#include "instapop/featurize.h"
#include "instapop/gbm.h"
#include "instapop/ingest.h"
#include "instapop/metrics.h"
#include "instapop/model_io.h"
#include "instapop/parallel.h"
#include "instapop/pipeline.h"
#include "instapop/rng.h"
#include "instapop/schema.h"
#include "json.hpp"

namespace instapop::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Bad flags, masks or mismatched inputs; mapped to kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr ReferenceRow kReference[] = {
    {"T", .261, 1.306, .086, "<1"},      {"C", .305, 1.291, .108, "<1"},
    {"A", .349, 1.266, .141, "935"},     {"CT", .417, 1.231, .188, "<1"},
    {"AT", .425, 1.219, .204, "936"},    {"AC", .426, 1.216, .207, "936"},
    {"YCT", .433, 1.222, .200, "71"},    {"ICT", .435, 1.219, .204, "18"},
    {"YICT", .444, 1.214, .211, "88"},   {"PCT", .452, 1.210, .216, "33"},
    {"ECT", .455, 1.208, .219, "89"},    {"YPCT", .456, 1.207, .220, "103"},
    {"IPCT", .456, 1.206, .221, "50"},   {"YECT", .457, 1.206, .221, "159"},
    {"IECT", .458, 1.205, .222, "106"},  {"YIPCT", .459, 1.204, .224, "120"},
    {"EPCT", .460, 1.205, .223, "99"},   {"YIECT", .461, 1.204, .224, "176"},
    {"YEPCT", .461, 1.204, .224, "169"}, {"IEPCT", .462, 1.202, .226, "116"},
    {"YIEPCT", .463, 1.202, .227, "186"}, {"ACT", .501, 1.163, .276, "936"},
    {"PACT", .504, 1.162, .277, "968"},  {"EACT", .505, 1.162, .277, "1024"},
    {"IPACT", .505, 1.160, .279, "985"}, {"YEACT", .506, 1.160, .279, "1094"},
    {"YPACT", .506, 1.160, .279, "1038"}, {"IEACT", .507, 1.160, .280, "1041"},
    {"YACT", .508, 1.158, .282, "1006"}, {"EPACT", .508, 1.159, .280, "1034"},
    {"YIPACT", .508, 1.158, .282, "1055"}, {"IACT", .508, 1.156, .284, "954"},
    {"YEPACT", .509, 1.159, .281, "1104"}, {"YIEACT", .509, 1.158, .282, "1111"},
    {"IEPACT", .510, 1.157, .283, "1051"}, {"YIEPACT", .510, 1.157, .283, "1121"},
    {"YIACT", .510, 1.155, .285, "1023"},
};

const ReferenceRow* find_reference(std::string_view mask) {
  for (const auto& r : kReference) {
    if (r.mask == mask) return &r;
  }
  return nullptr;
}

GroupMask mask_flag(const std::string& text) {
  try {
    return parse_mask(text);
  } catch (const ParseError& e) {
    throw UsageError(std::string("invalid group mask '") + text + "': " +
                     e.what());
  }
}

std::vector<GroupMask> plan_flag(const std::string& text) {
  std::vector<GroupMask> masks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) masks.push_back(mask_flag(item));
  }
  if (masks.empty()) throw UsageError("--plan lists no masks");
  return masks;
}

void check_mask(const FeatureSchema& schema, GroupMask mask) {
  try {
    project_checked(schema, mask);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

// Run manifest written next to every command's outputs.
class Manifest {
 public:
  Manifest(std::string command, std::uint64_t seed) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = std::string(kToolVersion);
    doc_["seed"] = seed;
    doc_["config"] = json::object();
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
    doc_["timings"] = json::object();
  }

  json& operator[](const char* key) { return doc_[key]; }

  void write(const fs::path& dir) {
    doc_["timings"]["total_seconds"] = total_.seconds();
    const fs::path path = dir / "manifest.json";
    std::ofstream f(path);
    f << doc_.dump(2) << '\n';
    if (!f) throw IoError("cannot write " + path.string());
  }

 private:
  json doc_;
  Stopwatch total_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
}

json config_json(const GbmConfig& c) { return json::parse(c.to_json()); }

// ---------------------------------------------------------------------------

struct GenFlags {
  std::uint64_t rows = 1000;
  std::uint64_t seed = 0;
  std::vector<std::string> signals;
  double noise = 0.0;
  bool benchmark = false;
  std::string out;
};

int cmd_gen(const GenFlags& f, std::ostream& out) {
  if (f.rows == 0) throw UsageError("--rows must be positive");
  SynthConfig config = f.benchmark ? author_dominant_config(f.rows, f.seed)
                                   : SynthConfig{};
  config.n_rows = f.rows;
  config.seed = f.seed;
  if (!f.benchmark) config.noise_sd = f.noise;
  for (const std::string& s : f.signals) {
    const auto eq = s.find('=');
    if (eq != 1) throw UsageError("--signal expects G=weight, got '" + s + "'");
    const auto g = group_from_letter(s[0]);
    if (!g) throw UsageError("unknown group letter in --signal '" + s + "'");
    double w = 0.0;
    try {
      std::size_t used = 0;
      w = std::stod(s.substr(2), &used);
      if (used != s.size() - 2) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageError("bad weight in --signal '" + s + "'");
    }
    config.set_signal(*g, w);
  }
  try {
    config.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  Manifest manifest("gen", config.seed);
  manifest["config"] = json::parse(config.to_json());
  const fs::path target(f.out);
  const bool is_file = target.extension() == ".csv";
  const fs::path dir = is_file ? target.parent_path() : target;
  const fs::path csv = is_file ? target : target / "posts.csv";
  if (!dir.empty()) ensure_dir(dir);

  Stopwatch sw;
  const Dataset ds = generate(config);
  manifest["timings"]["generate_seconds"] = sw.seconds();
  write_dataset(ds, csv, config);
  manifest["schema_hash"] = hash_to_hex(ds.schema().hash());
  manifest["outputs"]["csv"] = csv.string();
  manifest["outputs"]["sidecar"] = sidecar_path(csv).string();
  manifest["outputs"]["dataset_checksum"] = hash_to_hex(ds.checksum());
  manifest.write(dir.empty() ? fs::path(".") : dir);
  out << "wrote " << ds.n_rows() << " rows x " << ds.n_cols()
      << " columns to " << csv.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GbmFlags {
  int leaves = 256;
  int bins = 255;
  double lr = 0.05;
  double feature_fraction = 0.5;
  int rounds = 500;
  int min_data = 20;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  bool parallel = false;

  void attach(CLI::App* app) {
    app->add_option("--leaves", leaves, "Maximum leaves per tree")
        ->capture_default_str();
    app->add_option("--bins", bins, "Histogram bins per feature")
        ->capture_default_str();
    app->add_option("--lr", lr, "Learning rate")->capture_default_str();
    app->add_option("--feature-fraction", feature_fraction,
                    "Fraction of columns sampled per round")
        ->capture_default_str();
    app->add_option("--rounds", rounds, "Boosting rounds")
        ->capture_default_str();
    app->add_option("--min-data", min_data, "Minimum rows per leaf")
        ->capture_default_str();
    app->add_option("--lambda", lambda, "L2 leaf regularization")
        ->capture_default_str();
    app->add_option("--seed", seed, "Seed for every random draw")
        ->capture_default_str();
    app->add_flag("--parallel", parallel,
                  "Parallelise work inside the run (results are unchanged)");
  }

  GbmConfig config() const {
    GbmConfig c;
    c.num_leaves = leaves;
    c.max_bins = bins;
    c.learning_rate = lr;
    c.feature_fraction = feature_fraction;
    c.n_rounds = rounds;
    c.min_data_in_leaf = min_data;
    c.lambda_l2 = lambda;
    c.seed = seed;
    try {
      c.validate();
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct TrainFlags {
  std::string data;
  std::string groups = "YIEPACT";
  GbmFlags gbm;
  std::string out;
};

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const GroupMask mask = mask_flag(f.groups);
  const GbmConfig config = f.gbm.config();
  Manifest manifest("train", config.seed);
  manifest["config"] = config_json(config);
  manifest["config"]["groups"] = mask.render();
  manifest["inputs"]["data"] = f.data;

  const Dataset ds = read_dataset(f.data, read_sidecar_schema(f.data));
  check_mask(ds.schema(), mask);
  const fs::path dir(f.out);
  ensure_dir(dir);

  const auto rows = all_rows(ds.n_rows());
  FitOptions options;
  options.parallel = f.gbm.parallel;
  Stopwatch sw;
  const TreeEnsemble model = train_model(ds, rows, mask, config, options);
  const double train_seconds = sw.seconds();

  const std::vector<double> yhat = predict_dataset(model, ds);
  const std::vector<double> y = transformed_targets(ds, rows, model.transform());
  const double train_rmse = rmse(y, yhat);

  const fs::path model_path = dir / "model.ipm";
  save_model(model, model_path);
  manifest["schema_hash"] = hash_to_hex(model.schema_hash());
  manifest["n_columns"] = model.num_features();
  manifest["n_trees"] = model.trees().size();
  manifest["train_rmse"] = train_rmse;
  manifest["outputs"]["model"] = model_path.string();
  manifest["timings"]["train_seconds"] = train_seconds;
  manifest.write(dir);
  out << "trained " << mask.render() << " on " << ds.n_rows() << " rows, "
      << model.num_features() << " columns, " << model.trees().size()
      << " trees\n";
  out << "training RMSE: " << std::setprecision(6) << train_rmse << '\n';
  out << "model: " << model_path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AblateFlags {
  std::string data;
  int folds = 3;
  std::string plan;
  GbmFlags gbm;
  std::uint64_t shap_rows = 10000;
  std::size_t top = 30;
  bool temporal = false;
  bool global_centering = false;
  bool shap_from_train = false;
  std::string out;
};

std::string fmt(double v, int precision) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

void print_summary(const AblationReport& report, std::ostream& out) {
  out << std::left << std::setw(9) << "mask" << std::right << std::setw(8)
      << "SRC mu" << std::setw(8) << "sd" << std::setw(8) << "RMSE mu"
      << std::setw(8) << "sd" << std::setw(8) << "R2 mu" << std::setw(8)
      << "sd" << std::setw(11) << "pred ms" << "   | " << std::setw(6) << "SRC"
      << std::setw(7) << "RMSE" << std::setw(6) << "R2" << std::setw(6) << "ms"
      << '\n';
  for (const MaskResult& m : report.masks) {
    const std::string name = m.mask.render();
    out << std::left << std::setw(9) << name << std::right << std::setw(8)
        << fmt(m.src.mean, 3) << std::setw(8) << fmt(m.src.sd, 3)
        << std::setw(8) << fmt(m.rmse.mean, 3) << std::setw(8)
        << fmt(m.rmse.sd, 3) << std::setw(8) << fmt(m.r2.mean, 3)
        << std::setw(8) << fmt(m.r2.sd, 3) << std::setw(11)
        << fmt(m.predict_ms_per_row, 5) << "   | ";
    if (const ReferenceRow* r = find_reference(name)) {
      out << std::setw(6) << fmt(r->src, 3) << std::setw(7) << fmt(r->rmse, 3)
          << std::setw(6) << fmt(r->r2, 3) << std::setw(6) << r->predict_ms;
    } else {
      out << std::setw(6) << "-";
    }
    out << '\n';
  }
  out << "columns right of '|': " << kReferenceLabel << '\n';
}

int cmd_ablate(const AblateFlags& f, std::ostream& out, std::ostream& err) {
  if (f.folds < 2) throw UsageError("--folds must be at least 2");
  if (f.top == 0) throw UsageError("--top must be positive");
  AblationPlan plan = f.plan.empty() ? default_plan() : AblationPlan{};
  if (!f.plan.empty()) plan.combinations = plan_flag(f.plan);
  plan.n_folds = f.folds;
  plan.seed = f.gbm.seed;
  plan.gbm = f.gbm.config();
  plan.shap_rows_per_fold = f.shap_rows;
  plan.top_k = f.top;
  plan.fold_mode = f.temporal ? FoldMode::kTemporal : FoldMode::kShuffled;
  plan.centering =
      f.global_centering ? CenteringMode::kGlobal : CenteringMode::kFoldLocal;
  plan.shap_source =
      f.shap_from_train ? ShapSource::kTrainFold : ShapSource::kTestFold;
  plan.parallel = f.gbm.parallel;
  try {
    plan.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  Manifest manifest("ablate", plan.seed);
  manifest["config"] = json::parse(plan.to_json());
  manifest["inputs"]["data"] = f.data;
  const Dataset ds = read_dataset(f.data, read_sidecar_schema(f.data));
  for (GroupMask m : plan.combinations) check_mask(ds.schema(), m);
  const fs::path dir(f.out);
  ensure_dir(dir);

  const std::size_t total = plan.combinations.size() * plan.n_folds;
  std::size_t done = 0;
  RunOptions options;
  options.on_entry = [&](const FoldEntry& e) {
    ++done;
    err << "[" << done << "/" << total << "] " << e.mask.render() << " fold "
        << e.eval.fold_id << " SRC " << fmt(e.eval.src, 4) << " train "
        << fmt(e.eval.train_seconds, 2) << "s\n";
  };
  Stopwatch sw;
  const AblationReport report = run(plan, ds, options);
  const double run_seconds = sw.seconds();
  write_report(report, dir);

  print_summary(report, out);
  out << "entries: " << report.n_entries() << '\n';
  out << "local accuracy: max residual " << std::scientific
      << std::setprecision(3) << report.max_local_residual << std::defaultfloat
      << ", violations " << report.local_violations << '\n';

  manifest["schema_hash"] = hash_to_hex(ds.schema().hash());
  manifest["dataset_checksum"] = hash_to_hex(ds.checksum());
  manifest["n_entries"] = report.n_entries();
  manifest["local_violations"] = report.local_violations;
  manifest["max_local_residual"] = report.max_local_residual;
  manifest["outputs"]["report"] = (dir / "report.json").string();
  manifest["timings"]["run_seconds"] = run_seconds;
  manifest.write(dir);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExplainFlags {
  std::string model;
  std::string data;
  std::string report;
  std::size_t top = 30;
  std::uint64_t max_rows = 10000;
  std::uint64_t seed = 0;
  bool audit = false;
  std::string out;
};

void print_ranking(std::span<const RankedFeature> ranking, std::ostream& out) {
  int pos = 0;
  for (const RankedFeature& r : ranking) {
    out << std::setw(3) << ++pos << "  " << group_letter(r.group) << "  "
        << std::left << std::setw(28) << r.column << std::right
        << std::scientific << std::setprecision(4) << r.score
        << std::defaultfloat << "  in " << r.presence << " models\n";
  }
}

int explain_report(const ExplainFlags& f, std::ostream& out) {
  Manifest manifest("explain", f.seed);
  manifest["config"]["top"] = f.top;
  manifest["inputs"]["report"] = f.report;
  const auto tables = read_attribution_tables(f.report);
  if (tables.empty()) throw UsageError("report holds no attribution tables");
  const auto ranking = cross_model_top_k(tables, f.top);
  const fs::path dir(f.out);
  ensure_dir(dir);
  write_top_k_csv(dir / "top_k.csv", ranking);
  manifest["outputs"]["top_k"] = (dir / "top_k.csv").string();
  manifest["n_models"] = tables.size();
  manifest.write(dir);
  print_ranking(ranking, out);
  return kExitOk;
}

int explain_model(const ExplainFlags& f, std::ostream& out) {
  Manifest manifest("explain", f.seed);
  manifest["config"]["top"] = f.top;
  manifest["config"]["max_rows"] = f.max_rows;
  manifest["inputs"]["model"] = f.model;
  manifest["inputs"]["data"] = f.data;
  const TreeEnsemble model = load_model(f.model);
  const Dataset ds = read_dataset(f.data, read_sidecar_schema(f.data));
  const FeatureSchema& ms = model.schema();
  DenseMatrix x;
  std::vector<std::uint32_t> rows;
  rows = ds.n_rows() <= f.max_rows
             ? all_rows(ds.n_rows())
             : seeded_sample(ds.n_rows(), f.max_rows, f.seed, 0x45585043);
  x = transform_rows(ds, rows, ms, model.transform());
  if (rows.empty()) throw UsageError("dataset has no rows to explain");

  std::vector<Explanation> ex(rows.size());
  parallel_for(rows.size(), 16, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) ex[i] = tree_shap(model, x.row(i));
  });
  double max_residual = 0.0;
  for (const Explanation& e : ex) {
    max_residual = std::max(max_residual, local_accuracy_residual(e));
  }

  const auto groups = aggregate_groups(ex, ms, model.mask());
  const auto split = sign_split(ex);
  const auto table =
      make_attribution_table(model.mask().render(), ms, mean_abs_phi(ex));
  const auto ranking = cross_model_top_k(std::span(&table, 1), f.top);

  const fs::path dir(f.out);
  ensure_dir(dir);
  const std::vector<std::uint64_t> ids(rows.begin(), rows.end());
  write_phi_csv(dir / "phi.csv", ms, ids, ex);
  write_group_csv(dir / "groups.csv", groups);
  write_sign_split_csv(dir / "sign_split.csv", ms, split);
  write_top_k_csv(dir / "top_k.csv", ranking);

  manifest["schema_hash"] = hash_to_hex(model.schema_hash());
  manifest["n_rows"] = rows.size();
  manifest["max_local_residual"] = max_residual;
  for (const char* name : {"phi", "groups", "sign_split", "top_k"}) {
    manifest["outputs"][name] = (dir / (std::string(name) + ".csv")).string();
  }
  manifest.write(dir);

  out << "explained " << rows.size() << " rows of " << model.mask().render()
      << '\n';
  for (const auto& g : kFeatureGroups) {
    out << "  " << g.letter << "  " << std::setw(14) << std::left
        << g.display_name << std::right << std::scientific
        << std::setprecision(4) << groups[g.code] << std::defaultfloat << "  "
        << fmt(100.0 * groups.share(g.code), 1) << "%\n";
  }
  print_ranking(ranking, out);
  if (f.audit) {
    out << "local accuracy max residual: " << std::scientific
        << std::setprecision(3) << max_residual << std::defaultfloat << '\n';
    if (max_residual > kLocalAccuracyTolerance) {
      out << "local accuracy audit FAILED (tolerance "
          << kLocalAccuracyTolerance << ")\n";
      return kExitFailure;
    }
  }
  return kExitOk;
}

int cmd_explain(const ExplainFlags& f, std::ostream& out) {
  if (f.top == 0) throw UsageError("--top must be positive");
  const bool by_model = !f.model.empty() || !f.data.empty();
  if (by_model == !f.report.empty()) {
    throw UsageError("explain needs either --model and --data, or --report");
  }
  if (!by_model) return explain_report(f, out);
  if (f.model.empty() || f.data.empty()) {
    throw UsageError("explain needs both --model and --data");
  }
  return explain_model(f, out);
}

// ---------------------------------------------------------------------------

struct PredictFlags {
  std::string model;
  std::string data;
  std::string out;
};

int cmd_predict(const PredictFlags& f, std::ostream& out) {
  Manifest manifest("predict", 0);
  manifest["inputs"]["model"] = f.model;
  manifest["inputs"]["data"] = f.data;
  const TreeEnsemble model = load_model(f.model);
  const Dataset ds = read_dataset(f.data, read_sidecar_schema(f.data));
  const RowTransformer tf(ds.schema(), model.schema(), model.transform());

  const std::size_t n = ds.n_rows();
  std::vector<double> pred(n);
  std::vector<double> micros(n);
  std::vector<double> buf(model.num_features());
  Stopwatch total;
  for (std::size_t i = 0; i < n; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    tf.apply(ds.row(i), buf);
    pred[i] = model.predict_row(buf);
    const auto t1 = std::chrono::steady_clock::now();
    micros[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }
  const double predict_seconds = total.seconds();

  const fs::path dir(f.out);
  ensure_dir(dir);
  const fs::path csv = dir / "predictions.csv";
  {
    std::ofstream file(csv);
    file << "row,prediction,likes_estimate\n";
    file << std::setprecision(17);
    for (std::size_t i = 0; i < n; ++i) {
      file << i << ',' << pred[i] << ','
           << inverse_target(pred[i], model.transform()) << '\n';
    }
    if (!file) throw IoError("cannot write " + csv.string());
  }

  json latency = json::object();
  if (n > 0) {
    latency["p50_us"] = quantile(micros, 0.5);
    latency["p99_us"] = quantile(micros, 0.99);
    latency["mean_us"] = predict_seconds * 1e6 / static_cast<double>(n);
  }
  manifest["schema_hash"] = hash_to_hex(model.schema_hash());
  manifest["n_rows"] = n;
  manifest["latency"] = latency;
  manifest["outputs"]["predictions"] = csv.string();
  manifest["timings"]["predict_seconds"] = predict_seconds;
  manifest.write(dir);

  out << "predicted " << n << " rows -> " << csv.string() << '\n';
  if (n > 0) {
    out << "per-row latency: p50 " << fmt(latency["p50_us"].get<double>(), 2)
        << " us, p99 " << fmt(latency["p99_us"].get<double>(), 2) << " us\n";
  }
  return kExitOk;
}

}  // namespace

std::span<const ReferenceRow> reference_table() { return kReference; }

int run(std::span<const std::string> args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Popularity regression, attribution and ablation tool",
               "instapop"};
  app.require_subcommand(1);
  int threads = -1;
  app.add_option("--threads", threads,
                 "Worker threads (default: INSTAPOP_THREADS or all cores)");

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen_cmd->add_option("--rows", gen.rows, "Number of posts")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")
      ->capture_default_str();
  gen_cmd->add_option("--signal", gen.signals,
                      "Planted group weight, e.g. A=1.0 (repeatable)");
  gen_cmd->add_option("--noise", gen.noise, "Gaussian noise sd")
      ->capture_default_str();
  gen_cmd->add_flag("--benchmark", gen.benchmark,
                    "Author-dominant benchmark weights");
  gen_cmd->add_option("-o,--out", gen.out, "Output directory or .csv path")
      ->required();

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--data", train.data, "Dataset CSV")->required();
  train_cmd->add_option("--groups", train.groups, "Group mask, e.g. ACT")
      ->capture_default_str();
  train.gbm.attach(train_cmd);
  train_cmd->add_option("-o,--out", train.out, "Output directory")->required();

  AblateFlags ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation study");
  ablate_cmd->add_option("--data", ablate.data, "Dataset CSV")->required();
  ablate_cmd->add_option("--folds", ablate.folds, "Cross-validation folds")
      ->capture_default_str();
  ablate_cmd->add_option("--plan", ablate.plan,
                         "Comma-separated masks (default: all 37)");
  ablate.gbm.attach(ablate_cmd);
  ablate_cmd->add_option("--shap-rows", ablate.shap_rows,
                         "Rows explained per fold")
      ->capture_default_str();
  ablate_cmd->add_option("--top", ablate.top, "Cross-model ranking length")
      ->capture_default_str();
  ablate_cmd->add_flag("--temporal", ablate.temporal,
                       "Contiguous folds in row order");
  ablate_cmd->add_flag("--global-centering", ablate.global_centering,
                       "Fit log-centring means on all rows");
  ablate_cmd->add_flag("--shap-from-train", ablate.shap_from_train,
                       "Explain training rows instead of held-out rows");
  ablate_cmd->add_option("-o,--out", ablate.out, "Report directory")
      ->required();

  ExplainFlags explain;
  auto* explain_cmd = app.add_subcommand("explain", "Attribution tables");
  explain_cmd->add_option("--model", explain.model, "Model file");
  explain_cmd->add_option("--data", explain.data, "Dataset CSV");
  explain_cmd->add_option("--report", explain.report,
                          "Ablation report.json or its directory");
  explain_cmd->add_option("--top", explain.top, "Ranking length")
      ->capture_default_str();
  explain_cmd->add_option("--max-rows", explain.max_rows,
                          "Explain a seeded sample of at most this many rows")
      ->capture_default_str();
  explain_cmd->add_option("--seed", explain.seed, "Sampling seed")
      ->capture_default_str();
  explain_cmd->add_flag("--audit", explain.audit,
                        "Check local accuracy and print the max residual");
  explain_cmd->add_option("-o,--out", explain.out, "Output directory")
      ->required();

  PredictFlags predict;
  auto* predict_cmd = app.add_subcommand("predict", "Score a dataset");
  predict_cmd->add_option("--model", predict.model, "Model file")->required();
  predict_cmd->add_option("--data", predict.data, "Dataset CSV")->required();
  predict_cmd->add_option("-o,--out", predict.out, "Output directory")
      ->required();

  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("instapop");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (threads == 0 || threads < -1) {
      throw UsageError("--threads must be positive");
    }
    ThreadLimit limit(threads > 0 ? threads : env_thread_count());
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*train_cmd) return cmd_train(train, out);
    if (*ablate_cmd) return cmd_ablate(ablate, out, err);
    if (*explain_cmd) return cmd_explain(explain, out);
    if (*predict_cmd) return cmd_predict(predict, out);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const SchemaMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace instapop::cli
