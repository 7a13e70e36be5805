#include "aucal/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "aucal/audit.hpp"
#include "aucal/calibrate.hpp"
#include "aucal/error.hpp"
#include "aucal/relabel.hpp"
#include "aucal/report.hpp"

namespace aucal::cli {
namespace {

namespace fs = std::filesystem;
using report::Json;

constexpr double kDefaultThreshold = 2.5;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> header_columns(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> names;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) names.push_back(item);
  return names;
}

// Options shared by every command that reads a dataset.
struct DataArgs {
  std::string data;
  std::string group = "gender";
  std::string levels;  // declared level order, e.g. "M,F"
  std::string label;
  std::string label_col;
};

void add_data_options(CLI::App* sub, DataArgs& a, const std::string& data_flag = "--data") {
  sub->add_option(data_flag, a.data, "input CSV")->required();
  sub->add_option("--group", a.group, "protected attribute column")->capture_default_str();
  sub->add_option("--levels", a.levels, "declared level order of the group, e.g. M,F");
}

void add_label_options(CLI::App* sub, DataArgs& a) {
  sub->add_option("--label", a.label,
                  "target class, or the name of a 0/1 column holding the target");
  sub->add_option("--label-col", a.label_col, "label column (default: label)");
}

struct LoadedData {
  Dataset dataset;
  std::string target;  // target class name to pass to the library
  std::string digest;
  std::size_t dropped_missing_au = 0;
};

LoadedData load(const DataArgs& a, bool label_required = true) {
  CsvSchema schema;
  schema.group_columns = {a.group};
  schema.label_required = label_required;
  if (!a.levels.empty()) schema.level_order[a.group] = split_list(a.levels);
  std::string target = a.label;
  if (!a.label_col.empty()) {
    schema.label_column = a.label_col;
  } else if (!a.label.empty()) {
    const auto names = header_columns(a.data);
    if (std::find(names.begin(), names.end(), a.label) != names.end()) {
      // A column named after the target holds 0/1 indicators.
      schema.label_column = a.label;
      target = "1";
    }
  }
  if (target.empty()) target = "1";
  auto loaded = load_dataset(a.data, schema);
  return {std::move(loaded.dataset), target, report::file_digest(a.data), loaded.report.dropped_missing_au};
}

struct ThresholdArgs {
  std::string thresholds;  // calib.json or inline AU6=2.5,AU12=1.8
  bool per_group = false;
};

void add_threshold_options(CLI::App* sub, ThresholdArgs& a) {
  sub->add_option("--thresholds", a.thresholds,
                  "calibration JSON or inline AU=threshold list (default 2.5 for every AU)");
  sub->add_flag("--per-group-thresholds", a.per_group,
                "use the per-group thresholds of a calibration JSON");
}

Dataset binarize_with(const Dataset& dataset, const ThresholdArgs& a,
                      std::map<std::string, std::string>& inputs) {
  std::map<std::string, double> global;
  std::optional<GroupThresholds> per_group;
  if (a.thresholds.find('=') != std::string::npos) {
    if (a.per_group) throw InvalidConfig("--per-group-thresholds needs a calibration JSON");
    for (const auto& item : split_list(a.thresholds)) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw InvalidConfig("bad threshold entry '" + item + "'");
      try {
        global[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw InvalidConfig("bad threshold value in '" + item + "'");
      }
    }
  } else if (!a.thresholds.empty()) {
    const Json j = report::read_json_file(a.thresholds);
    inputs["thresholds"] = report::file_digest(a.thresholds);
    try {
      if (a.per_group) per_group = GroupThresholds{j.at("group").get<std::string>(), {}};
      for (const auto& r : j.at("results")) {
        const auto au = r.at("au").get<std::string>();
        global[au] = r.at("global_threshold").get<double>();
        if (per_group) {
          for (const auto& [level, t] : r.at("per_group_thresholds").items()) {
            per_group->values[{au, level}] = t.get<double>();
          }
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw InvalidConfig(std::string("calibration JSON: ") + e.what());
    }
  } else if (a.per_group) {
    throw InvalidConfig("--per-group-thresholds needs --thresholds");
  }
  for (const auto& au : dataset.au_ids()) global.emplace(au, kDefaultThreshold);
  return binarize(dataset, global, per_group);
}

Json with_header(const std::string& command, std::uint64_t seed,
                 const std::map<std::string, std::string>& inputs, const std::string& key,
                 Json body) {
  report::Header h{command, seed, inputs};
  return {{"header", report::to_json(h)}, {key, std::move(body)}};
}

void write_text(const fs::path& path, const std::string& text) { report::write_text_file(path, text); }

// ---- calibrate ----

struct CalibrateArgs {
  DataArgs data;
  std::vector<std::string> truth_cols;
  std::string suffix = "_truth";
  std::string out;
  std::uint64_t seed = 7;
};

void run_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto loaded = load(a.data, /*label_required=*/false);
  const auto& ds = loaded.dataset;
  const std::size_t attr = ds.attribute_index(a.data.group);
  std::vector<std::string> groups;
  for (const auto& r : ds.records()) {
    groups.push_back(ds.attributes()[attr].levels[static_cast<std::size_t>(r.groups[attr])]);
  }
  Json results = Json::array();
  for (const auto& au : a.truth_cols) {
    const std::size_t a_idx = ds.au_index(au);
    const std::string column = au + a.suffix;
    const auto& extras = ds.schema().extra_columns;
    const auto it = std::find(extras.begin(), extras.end(), column);
    if (it == extras.end()) throw MissingColumn(column);
    const auto e_idx = static_cast<std::size_t>(it - extras.begin());
    std::vector<double> intensities;
    std::vector<int> truth;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& v = ds[i].extras[e_idx];
      if (v != "0" && v != "1") throw ParseError(i + 1, column, "expected 0 or 1");
      truth.push_back(v == "1" ? 1 : 0);
      intensities.push_back(ds[i].au_intensities[a_idx]);
    }
    const auto result = calibrate::calibrate_per_group(au, intensities, truth, groups);
    results.push_back(report::to_json(result));
    out << au << ": global threshold " << report::format_double(result.global_threshold)
        << ", parity p " << report::format_double(result.raw_parity_p_value) << " -> "
        << report::format_double(result.parity_p_value) << '\n';
  }
  Json doc = with_header("calibrate", a.seed, {{"data", loaded.digest}}, "results", results);
  doc["group"] = a.data.group;
  report::write_json_file(a.out, doc);
}

// ---- audit ----

struct AuditArgs {
  DataArgs data;
  ThresholdArgs thresholds;
  std::vector<std::string> condition;
  bool marginal = false;
  bool merge_sparse = false;
  double min_expected = audit::kDefaultMinExpected;
  std::string out;
  std::string csv;
  std::string curves;
  double grid_step = 0.25;
  std::uint64_t seed = 7;
};

void run_audit(const AuditArgs& a, std::ostream& out) {
  const auto loaded = load(a.data);
  std::map<std::string, std::string> inputs{{"data", loaded.digest}};
  const auto ds = binarize_with(loaded.dataset, a.thresholds, inputs);
  audit::AuditOptions opts;
  opts.min_expected = a.min_expected;
  if (a.merge_sparse) opts.sparse_levels = audit::SparseLevelPolicy::merge_into_other;
  const audit::Conditioning cond{a.condition, a.marginal};
  const auto levels = ds.attribute(a.data.group).levels.size();
  const auto rep = levels >= 3 ? audit::multi_group_bias_report(ds, cond, a.data.group, loaded.target, opts)
                               : audit::conditional_bias_report(ds, cond, a.data.group, loaded.target, opts);
  auto body = report::to_json(rep);
  body["dropped_missing_au"] = loaded.dropped_missing_au;
  report::write_json_file(a.out, with_header("audit", a.seed, inputs, "report", body));
  if (!a.csv.empty()) {
    std::ostringstream ss;
    report::write_bias_csv(rep, ss);
    write_text(a.csv, ss.str());
  }
  if (!a.curves.empty()) {
    if (!(a.grid_step > 0.0)) throw InvalidConfig("--grid-step must be positive");
    std::vector<double> grid;
    for (int i = 0; kMinIntensity + i * a.grid_step <= kMaxIntensity + 1e-12; ++i) {
      grid.push_back(kMinIntensity + i * a.grid_step);
    }
    const auto curves = audit::bias_curves(ds, a.condition, a.data.group, loaded.target, grid);
    std::ostringstream ss;
    report::write_curves_csv(curves, ss);
    write_text(a.curves, ss.str());
  }
  std::size_t flagged = 0, tested = 0;
  for (const auto& c : rep.cells) {
    if (c.status != audit::CellStatus::tested) continue;
    ++tested;
    if (c.test->p_value < opts.highlight_alpha) ++flagged;
  }
  out << "audit: " << tested << " tested cells, " << flagged << " significant at "
      << opts.highlight_alpha;
  if (loaded.dropped_missing_au) out << " (" << loaded.dropped_missing_au << " records with missing AUs dropped)";
  out << '\n';
}

// ---- relabel ----

struct RelabelArgs {
  DataArgs data;
  ThresholdArgs thresholds;
  std::vector<std::string> condition;
  std::int64_t per_cell = 0;
  std::string out;
  std::string fliplog;
  std::uint64_t seed = 7;
};

void run_relabel(const RelabelArgs& a, std::ostream& out) {
  const auto loaded = load(a.data);
  std::map<std::string, std::string> inputs{{"data", loaded.digest}};
  const auto ds = binarize_with(loaded.dataset, a.thresholds, inputs);
  if (a.per_cell > 0) {
    const auto result = relabel::balanced_subsample(ds, a.condition, a.data.group, a.per_cell, a.seed);
    write_csv(result.dataset, fs::path(a.out));
    if (!a.fliplog.empty()) {
      Json shortfalls = Json::array();
      for (const auto& s : result.shortfalls) {
        shortfalls.push_back({{"cell", s.cell},
                              {"level", s.level},
                              {"available", s.available},
                              {"requested", s.requested}});
      }
      Json body = {{"kept", result.dataset.size()}, {"shortfalls", shortfalls}};
      report::write_json_file(a.fliplog, with_header("relabel", a.seed, inputs, "subsample", body));
    }
    out << "subsample: kept " << result.dataset.size() << " of " << ds.size() << " records\n";
    return;
  }
  const auto result = relabel::relabel_to_parity(ds, a.condition, a.data.group, loaded.target, a.seed);
  write_csv(result.dataset, fs::path(a.out));
  if (!a.fliplog.empty()) {
    report::write_json_file(a.fliplog,
                            with_header("relabel", a.seed, inputs, "log", report::to_json(result.log)));
  }
  out << "relabel: " << result.log.flips.size() << " labels flipped\n";
}

// ---- train ----

struct TrainArgs {
  DataArgs data;
  ThresholdArgs thresholds;
  std::vector<std::string> condition{"AU6", "AU12"};
  aucfer::TrainConfig config;
  std::string reduction = "sum";
  std::string out;
};

aucfer::TripletReduction parse_reduction(const std::string& s) {
  if (s == "sum") return aucfer::TripletReduction::sum;
  if (s == "mean") return aucfer::TripletReduction::mean;
  throw InvalidConfig("--reduction must be sum or mean");
}

void run_train(const TrainArgs& a, std::ostream& out) {
  const auto loaded = load(a.data);
  std::map<std::string, std::string> inputs{{"data", loaded.digest}};
  const auto ds = binarize_with(loaded.dataset, a.thresholds, inputs);
  auto config = a.config;
  config.conditioning = a.condition;
  config.target_label = loaded.target;
  config.reduction = parse_reduction(a.reduction);
  const auto result = aucfer::train(ds, config);
  Json doc = report::model_to_json(result.params, config, &result);
  doc["header"] = report::to_json(report::Header{"train", config.seed, inputs});
  report::write_json_file(a.out, doc);
  out << "train: final loss " << report::format_double(result.loss_trace.back()) << " (softmax "
      << report::format_double(result.softmax_trace.back()) << ", triplet "
      << report::format_double(result.triplet_trace.back()) << ")\n";
}

// ---- eval ----

struct EvalArgs {
  DataArgs data;
  ThresholdArgs thresholds;
  std::string model;
  std::string positive_group;
  std::string split = "all";
  bool fair_test = false;
  std::string reference;
  std::string balance = "rate";
  double easy_high = 0.99999;
  double easy_low = 1e-5;
  bool no_easy_high = false;
  std::string out;
  std::uint64_t seed = 7;
};

void run_eval(const EvalArgs& a, std::ostream& out) {
  const auto model = report::model_from_json(report::read_json_file(a.model));
  std::map<std::string, std::string> inputs{{"model", report::file_digest(a.model)}};
  auto data_args = a.data;
  if (data_args.label.empty() && data_args.label_col.empty()) data_args.label = model.config.target_label;
  const auto loaded = load(data_args);
  inputs["test"] = loaded.digest;
  Dataset test = loaded.dataset;
  if (a.split != "all") {
    if (a.split != "train" && a.split != "test") throw InvalidConfig("--split must be all, train or test");
    const Split keep = a.split == "test" ? Split::test : Split::train;
    std::vector<AnnotatedRecord> rows;
    for (const auto& r : test.records()) {
      if (r.split == keep) rows.push_back(r);
    }
    if (rows.empty()) throw EmptyInput("no records in the " + a.split + " split");
    test = test.with_records(std::move(rows));
  }

  Json body;
  if (a.fair_test) {
    metrics::FairTestOptions fo;
    if (a.no_easy_high) {
      fo.easy_high.reset();
    } else {
      fo.easy_high = a.easy_high;
    }
    fo.easy_low = a.easy_low;
    fo.group_attr = a.data.group;
    fo.target_label = loaded.target;
    fo.conditioning = model.config.conditioning;
    fo.seed = a.seed;
    if (a.balance == "rate") {
      fo.mode = metrics::BalanceMode::balance_positive_rate;
    } else if (a.balance == "cells") {
      fo.mode = metrics::BalanceMode::balance_cell_counts;
      test = binarize_with(test, a.thresholds, inputs);
    } else {
      throw InvalidConfig("--balance must be rate or cells");
    }
    auto reference = model.params;
    if (!a.reference.empty()) {
      reference = report::model_from_json(report::read_json_file(a.reference)).params;
      inputs["reference"] = report::file_digest(a.reference);
    }
    const auto fair = metrics::build_fair_test_set(test, aucfer::predict_scores(reference, test), fo);
    body["fair_test"] = {{"records", fair.dataset.size()},
                         {"pruned_easy", fair.pruned_easy},
                         {"removed_for_balance", fair.removed_for_balance},
                         {"positive_rate", fair.positive_rate}};
    test = fair.dataset;
  }
  const auto result = metrics::evaluate(model.params, test, a.data.group, a.positive_group, loaded.target);
  body["eval"] = report::to_json(result);
  body["records"] = test.size();
  report::write_json_file(a.out, with_header("eval", a.seed, inputs, "result", body));
  out << "eval: accuracy " << report::format_double(result.accuracy) << ", disc "
      << report::format_double(result.disc_signed) << '\n';
}

// ---- compare ----

struct CompareArgs {
  std::string configs;
  std::size_t seeds = 5;
  std::uint64_t seed = 1;
  std::string out;
  std::string json;
};

Json compare_to_json(const experiment::CompareResult& r) {
  Json runs = Json::array();
  for (const auto& run : r.runs) {
    Json seeds = Json::array();
    for (const auto& s : run.seeds) {
      seeds.push_back({{"seed", s.seed},
                       {"eval", report::to_json(s.eval)},
                       {"final_loss", s.train.loss_trace.back()},
                       {"starved_batches", s.train.starved_batches}});
    }
    runs.push_back({{"name", run.name},
                    {"config", report::to_json(run.config)},
                    {"accuracy", report::to_json(run.accuracy)},
                    {"f1", report::to_json(run.f1)},
                    {"disc_abs", report::to_json(run.disc_abs)},
                    {"disc_signed", report::to_json(run.disc_signed)},
                    {"seeds", seeds}});
  }
  return {{"runs", runs},
          {"test_records", r.test_records},
          {"fair_test_records", r.fair_test_records},
          {"pruned_easy", r.pruned_easy},
          {"removed_for_balance", r.removed_for_balance},
          {"fair_positive_rate", r.fair_positive_rate}};
}

void run_compare(const CompareArgs& a, std::ostream& out) {
  if (a.seeds < 1) throw InvalidConfig("--seeds must be positive");
  const Json spec = report::read_json_file(a.configs);
  std::map<std::string, std::string> inputs{{"configs", report::file_digest(a.configs)}};
  const fs::path base = fs::path(a.configs).parent_path();
  experiment::CompareOptions opts;
  DataArgs data;
  ThresholdArgs thresholds;
  try {
    data.data = (base / spec.at("data").get<std::string>()).string();
    data.group = spec.value("group", std::string("gender"));
    data.label = spec.value("label", std::string());
    data.label_col = spec.value("label_column", std::string());
    if (spec.contains("levels")) {
      for (const auto& l : spec.at("levels")) data.levels += (data.levels.empty() ? "" : ",") + l.get<std::string>();
    }
    if (spec.contains("thresholds")) {
      for (const auto& [au, t] : spec.at("thresholds").items()) {
        thresholds.thresholds += (thresholds.thresholds.empty() ? "" : ",") + au + "=" +
                                 report::format_double(t.get<double>());
      }
    }
    opts.group_attr = data.group;
    opts.positive_group = spec.at("positive_group").get<std::string>();
    opts.test_label_column = spec.value("test_label_column", std::string());
    const auto defaults = spec.value("defaults", Json::object());
    std::string reference;
    if (spec.contains("reference")) reference = spec.at("reference").get<std::string>();
    for (const auto& r : spec.at("runs")) {
      experiment::RunSpec run;
      run.name = r.at("name").get<std::string>();
      if (run.name.find(',') != std::string::npos) throw InvalidConfig("run names may not contain ','");
      run.config = report::train_config_from_json(r, report::train_config_from_json(defaults));
      if (run.name == reference) opts.reference_run = opts.runs.size();
      opts.runs.push_back(std::move(run));
    }
    if (spec.contains("fair_test")) {
      const auto& f = spec.at("fair_test");
      if (f.contains("easy_high")) {
        if (f.at("easy_high").is_null()) {
          opts.fair.easy_high.reset();
        } else {
          opts.fair.easy_high = f.at("easy_high").get<double>();
        }
      }
      if (f.contains("easy_low")) opts.fair.easy_low = f.at("easy_low").get<double>();
      if (f.value("balance", std::string("rate")) == "cells") {
        opts.fair.mode = metrics::BalanceMode::balance_cell_counts;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("runs config: ") + e.what());
  }
  const auto loaded = load(data);
  inputs["data"] = loaded.digest;
  const auto ds = binarize_with(loaded.dataset, thresholds, inputs);
  for (auto& run : opts.runs) run.config.target_label = loaded.target;
  opts.fair.group_attr = data.group;
  opts.fair.target_label = opts.test_label_column.empty() ? loaded.target : "1";
  opts.fair.conditioning = opts.runs.front().config.conditioning;
  opts.fair.seed = a.seed;
  for (std::size_t s = 0; s < a.seeds; ++s) opts.seeds.push_back(a.seed + s);
  opts.threads = experiment::threads_from_env();

  const auto result = experiment::compare(ds, opts);
  std::ostringstream ss;
  experiment::write_compare_csv(result, ss);
  write_text(a.out, ss.str());
  if (!a.json.empty()) {
    report::write_json_file(a.json, with_header("compare", a.seed, inputs, "compare", compare_to_json(result)));
  }
  out << ss.str();
}

// ---- synth ----

struct SynthArgs {
  std::string config;
  std::string out;
  std::string config_out;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
};

void run_synth(const SynthArgs& a, std::ostream& out) {
  auto config = a.config.empty() ? synth::happy_config()
                                 : synth::config_from_json(report::read_json_file(a.config));
  if (a.n) config.n = *a.n;
  if (a.seed) config.seed = *a.seed;
  const auto gen = synth::generate(config);
  write_csv(gen.dataset, fs::path(a.out));
  if (!a.config_out.empty()) report::write_json_file(a.config_out, synth::config_to_json(config));
  out << "synth: wrote " << gen.dataset.size() << " records\n";
}

// ---- demo ----

std::size_t flagged_cells(const audit::BiasReport& rep, double alpha) {
  return static_cast<std::size_t>(std::count_if(rep.cells.begin(), rep.cells.end(), [&](const auto& c) {
    return c.status == audit::CellStatus::tested && c.test->p_value < alpha;
  }));
}

double label_disc(const Dataset& ds, const std::string& group, const std::string& positive_group,
                  const std::string& target) {
  const std::size_t attr = ds.attribute_index(group);
  const int cls = ds.target_class(target);
  std::vector<int> labels;
  std::vector<std::string> groups;
  for (const auto& r : ds.records()) {
    labels.push_back(r.label == cls ? 1 : 0);
    groups.push_back(ds.attributes()[attr].levels[static_cast<std::size_t>(r.groups[attr])]);
  }
  return metrics::cv_discrimination(labels, groups, positive_group).disc_signed;
}

}  // namespace

synth::SynthConfig demo_synth_config(std::uint64_t seed, std::size_t n) {
  auto config = synth::happy_config();
  config.seed = seed;
  config.n = n;
  return config;
}

experiment::CompareOptions demo_compare_options(std::uint64_t seed, std::size_t seeds,
                                                std::size_t epochs) {
  experiment::CompareOptions opts;
  aucfer::TrainConfig base;
  base.epochs = epochs;
  base.target_label = "1";
  base.reduction = aucfer::TripletReduction::mean;
  base.margin = 0.5;
  auto baseline = base;
  baseline.lambda = 0.0;
  opts.runs = {{"baseline", baseline}, {"aucfer", base}};
  for (std::size_t s = 0; s < seeds; ++s) opts.seeds.push_back(seed + s);
  opts.group_attr = "gender";
  opts.positive_group = "F";
  opts.test_label_column = "fair_label";
  opts.fair.group_attr = "gender";
  opts.fair.target_label = "1";
  opts.fair.conditioning = base.conditioning;
  opts.fair.seed = seed;
  return opts;
}

void run_demo(const DemoOptions& o, std::ostream& out) {
  fs::create_directories(o.out_dir);
  if (!fs::is_directory(o.out_dir)) throw IoError("cannot create " + o.out_dir.string());
  const auto config = demo_synth_config(o.seed, o.n);
  const auto gen = synth::generate(config);
  write_csv(gen.dataset, o.out_dir / "data.csv");
  report::write_json_file(o.out_dir / "synth_config.json", synth::config_to_json(config));
  const auto data = binarize(gen.dataset, config.presence_thresholds);
  const std::vector<std::string> aus{"AU6", "AU12"};
  const audit::Conditioning cond{aus, false};
  const std::map<std::string, std::string> inputs{
      {"data", report::file_digest(o.out_dir / "data.csv")}};

  auto audit_to = [&](const Dataset& ds, const std::string& name) {
    const auto rep = audit::conditional_bias_report(ds, cond, "gender", "1");
    report::write_json_file(o.out_dir / (name + ".json"),
                            with_header("demo", o.seed, inputs, "report", report::to_json(rep)));
    std::ostringstream ss;
    report::write_bias_csv(rep, ss);
    write_text(o.out_dir / (name + ".csv"), ss.str());
    return rep;
  };
  const auto before = audit_to(data, "audit_before");
  const auto fair_audit = audit_to(with_label_column(data, "fair_label"), "audit_fair_labels");
  const auto relabeled = relabel::relabel_to_parity(data, aus, "gender", "1", o.seed);
  write_csv(relabeled.dataset, o.out_dir / "relabeled.csv");
  report::write_json_file(o.out_dir / "flips.json",
                          with_header("demo", o.seed, inputs, "log", report::to_json(relabeled.log)));
  const auto after = audit_to(relabeled.dataset, "audit_after");

  auto opts = demo_compare_options(o.seed, o.seeds, o.epochs);
  opts.threads = o.threads;
  const auto cmp = experiment::compare(data, opts);
  std::ostringstream table;
  experiment::write_compare_csv(cmp, table);
  write_text(o.out_dir / "table.csv", table.str());
  const auto& base = cmp.runs[0];
  const auto& mitigated = cmp.runs[1];
  const double reduction = experiment::disc_reduction(base, mitigated);
  const double accuracy_drop = base.accuracy.mean - mitigated.accuracy.mean;

  const Json summary = {
      {"records", data.size()},
      {"audit_before", {{"cells", before.cells.size()}, {"significant", flagged_cells(before, 0.05)}}},
      {"audit_fair_labels",
       {{"cells", fair_audit.cells.size()}, {"significant", flagged_cells(fair_audit, 0.05)}}},
      {"audit_after", {{"cells", after.cells.size()}, {"significant", flagged_cells(after, 0.05)}}},
      {"flips", relabeled.log.flips.size()},
      {"label_disc_before", label_disc(data, "gender", "F", "1")},
      {"label_disc_after", label_disc(relabeled.dataset, "gender", "F", "1")},
      {"compare", compare_to_json(cmp)},
      {"disc_reduction", reduction},
      {"accuracy_drop", accuracy_drop},
  };
  report::write_json_file(o.out_dir / "demo.json", with_header("demo", o.seed, inputs, "summary", summary));

  out << "records:                 " << data.size() << '\n'
      << "significant cells:       " << flagged_cells(before, 0.05) << " biased, "
      << flagged_cells(fair_audit, 0.05) << " fair labels, " << flagged_cells(after, 0.05)
      << " after relabel (of " << before.cells.size() << ")\n"
      << "label disc:              " << report::format_double(label_disc(data, "gender", "F", "1"))
      << " -> " << report::format_double(label_disc(relabeled.dataset, "gender", "F", "1")) << '\n'
      << table.str() << "disc reduction:          " << report::format_double(reduction) << '\n'
      << "accuracy drop:           " << report::format_double(accuracy_drop) << '\n';
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audit, relabel and debias AU-annotated expression datasets", "aucal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", report::kToolVersion);

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "per-group AU binarization thresholds");
  add_data_options(cal_cmd, cal.data);
  cal_cmd->add_option("--truth-cols", cal.truth_cols, "AUs with expert presence columns <AU>_truth")
      ->required()
      ->delimiter(',');
  cal_cmd->add_option("--truth-suffix", cal.suffix, "suffix of truth columns")->capture_default_str();
  cal_cmd->add_option("--out", cal.out, "calibration JSON")->required();
  cal_cmd->add_option("--seed", cal.seed, "recorded in the report header");

  AuditArgs aud;
  auto* aud_cmd = app.add_subcommand("audit", "AU-conditioned annotation bias report");
  add_data_options(aud_cmd, aud.data);
  add_label_options(aud_cmd, aud.data);
  add_threshold_options(aud_cmd, aud.thresholds);
  aud_cmd->add_option("--condition", aud.condition, "conditioning AUs, e.g. AU6,AU12")
      ->required()
      ->delimiter(',');
  aud_cmd->add_flag("--marginal", aud.marginal, "one table per AU instead of joint cells");
  aud_cmd->add_option("--min-expected", aud.min_expected, "minimum expected count per table entry")
      ->capture_default_str();
  aud_cmd->add_flag("--merge-sparse", aud.merge_sparse, "merge sparse levels into 'other'");
  aud_cmd->add_option("--out", aud.out, "report JSON")->required();
  aud_cmd->add_option("--csv", aud.csv, "per-cell CSV summary");
  aud_cmd->add_option("--curves", aud.curves, "per-group probability curves CSV");
  aud_cmd->add_option("--grid-step", aud.grid_step, "intensity step of the curves")->capture_default_str();
  aud_cmd->add_option("--seed", aud.seed, "recorded in the report header");

  RelabelArgs rel;
  auto* rel_cmd = app.add_subcommand("relabel", "equalize per-cell positive rates across groups");
  add_data_options(rel_cmd, rel.data);
  add_label_options(rel_cmd, rel.data);
  add_threshold_options(rel_cmd, rel.thresholds);
  rel_cmd->add_option("--condition", rel.condition, "conditioning AUs")->required()->delimiter(',');
  rel_cmd->add_option("--per-cell", rel.per_cell,
                      "balanced subsample of N records per (cell, group) instead of relabeling");
  rel_cmd->add_option("--out", rel.out, "relabeled CSV")->required();
  rel_cmd->add_option("--fliplog", rel.fliplog, "flip log JSON");
  rel_cmd->add_option("--seed", rel.seed)->capture_default_str();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "train the triplet-regularized classifier");
  add_data_options(tr_cmd, tr.data);
  add_label_options(tr_cmd, tr.data);
  add_threshold_options(tr_cmd, tr.thresholds);
  tr_cmd->add_option("--condition", tr.condition, "AUs defining triplet keys")->delimiter(',');
  tr_cmd->add_option("--lambda", tr.config.lambda)->capture_default_str();
  tr_cmd->add_option("--margin", tr.config.margin)->capture_default_str();
  tr_cmd->add_option("--lr", tr.config.learning_rate)->capture_default_str();
  tr_cmd->add_option("--batch", tr.config.batch_size)->capture_default_str();
  tr_cmd->add_option("--epochs", tr.config.epochs)->capture_default_str();
  tr_cmd->add_option("--emb", tr.config.d_emb)->capture_default_str();
  tr_cmd->add_option("--cap", tr.config.max_triplets_per_anchor, "triplets per anchor")
      ->capture_default_str();
  tr_cmd->add_option("--reduction", tr.reduction, "triplet loss reduction: sum or mean")
      ->capture_default_str();
  tr_cmd->add_option("--seed", tr.config.seed)->capture_default_str();
  tr_cmd->add_option("--out", tr.out, "model JSON")->required();

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "accuracy, F1 and discrimination of a model");
  add_data_options(ev_cmd, ev.data, "--test");
  add_label_options(ev_cmd, ev.data);
  add_threshold_options(ev_cmd, ev.thresholds);
  ev_cmd->add_option("--model", ev.model, "model JSON")->required();
  ev_cmd->add_option("--positive-group", ev.positive_group, "group whose rate comes first in Disc")
      ->required();
  ev_cmd->add_option("--split", ev.split, "all, train or test")->capture_default_str();
  ev_cmd->add_flag("--fair-test", ev.fair_test, "prune easy cases and balance groups first");
  ev_cmd->add_option("--reference", ev.reference, "model that scores easy cases (default: --model)");
  ev_cmd->add_option("--balance", ev.balance, "rate or cells")->capture_default_str();
  ev_cmd->add_option("--easy-high", ev.easy_high)->capture_default_str();
  ev_cmd->add_option("--easy-low", ev.easy_low)->capture_default_str();
  ev_cmd->add_flag("--no-easy-high", ev.no_easy_high, "prune only confident negatives");
  ev_cmd->add_option("--out", ev.out, "evaluation JSON")->required();
  ev_cmd->add_option("--seed", ev.seed)->capture_default_str();

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "multi-seed comparison of training runs");
  cmp_cmd->add_option("--configs", cmp.configs, "runs JSON")->required();
  cmp_cmd->add_option("--seeds", cmp.seeds, "number of seeds")->capture_default_str();
  cmp_cmd->add_option("--seed", cmp.seed, "first seed")->capture_default_str();
  cmp_cmd->add_option("--out", cmp.out, "table CSV")->required();
  cmp_cmd->add_option("--json", cmp.json, "per-seed results JSON");

  SynthArgs syn;
  auto* syn_cmd = app.add_subcommand("synth", "generate a synthetic dataset with known bias");
  syn_cmd->add_option("--config", syn.config, "generator JSON (default: built-in happy model)");
  syn_cmd->add_option("--out", syn.out, "output CSV")->required();
  syn_cmd->add_option("--config-out", syn.config_out, "write the effective generator config");
  syn_cmd->add_option("--n", syn.n, "record count override");
  syn_cmd->add_option("--seed", syn.seed, "seed override");

  DemoOptions demo;
  std::string demo_dir;
  auto* demo_cmd = app.add_subcommand("demo", "run the full pipeline on synthetic data");
  demo_cmd->add_option("--seed", demo.seed)->capture_default_str();
  demo_cmd->add_option("--out-dir", demo_dir, "artifact directory")->required();
  demo_cmd->add_option("--n", demo.n)->capture_default_str();
  demo_cmd->add_option("--seeds", demo.seeds, "training seeds per run")->capture_default_str();
  demo_cmd->add_option("--epochs", demo.epochs)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.back()->help());
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << report::kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.back()->help());
    return kExitInvalid;
  }

  try {
    if (cal_cmd->parsed()) run_calibrate(cal, out);
    if (aud_cmd->parsed()) run_audit(aud, out);
    if (rel_cmd->parsed()) run_relabel(rel, out);
    if (tr_cmd->parsed()) run_train(tr, out);
    if (ev_cmd->parsed()) run_eval(ev, out);
    if (cmp_cmd->parsed()) run_compare(cmp, out);
    if (syn_cmd->parsed()) run_synth(syn, out);
    if (demo_cmd->parsed()) {
      demo.out_dir = demo_dir;
      demo.threads = experiment::threads_from_env();
      if (demo.seeds < 1) throw InvalidConfig("--seeds must be positive");
      run_demo(demo, out);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace aucal::cli
