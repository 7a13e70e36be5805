#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aucal/cli.hpp"
#include "aucal/relabel.hpp"
#include "aucal/report.hpp"
#include "aucal/synth.hpp"

using namespace aucal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "aucal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("aucal_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 1 with usage text") {
  auto r = run({"audit", "--data", "x.csv", "--condition", "AU6", "--out", "r.json", "--bogus"});
  CHECK(r.code == cli::kExitInvalid);
  CHECK(r.err.find("--bogus") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({}).code == cli::kExitInvalid);
  CHECK(run({"frobnicate"}).code == cli::kExitInvalid);
  CHECK(run({"--version"}).code == cli::kExitOk);
}

TEST_CASE("missing input exits 2") {
  TempDir dir;
  const auto r = run({"audit", "--data", dir / "missing.csv", "--condition", "AU6", "--out", dir / "r.json"});
  CHECK(r.code == cli::kExitIo);
}

TEST_CASE("validation errors exit 1") {
  TempDir dir;
  std::ofstream(dir / "bad.csv") << "id,AU6,label,gender\na,9.0,1,F\n";
  CHECK(run({"audit", "--data", dir / "bad.csv", "--condition", "AU6", "--out", dir / "r.json"}).code ==
        cli::kExitInvalid);
  std::ofstream(dir / "ok.csv") << "id,AU6,label,gender\na,1.0,1,F\nb,3.0,0,M\n";
  CHECK(run({"audit", "--data", dir / "ok.csv", "--condition", "AU9", "--out", dir / "r.json"}).code ==
        cli::kExitInvalid);
  std::ofstream(dir / "gap.csv") << "id,AU6,label,gender\na,1.0,1,F\nb,,0,M\nc,3.0,0,M\n";
  const auto gap = run({"audit", "--data", dir / "gap.csv", "--condition", "AU6", "--out", dir / "g.json"});
  REQUIRE(gap.code == cli::kExitOk);
  CHECK(report::read_json_file(dir / "g.json")["report"]["dropped_missing_au"] == 1);
  CHECK(gap.out.find("1 records with missing AUs dropped") != std::string::npos);
  CHECK(run({"train", "--data", dir / "ok.csv", "--lambda", "-1", "--out", dir / "m.json"}).code ==
        cli::kExitInvalid);
}

TEST_CASE("pipeline through every subcommand") {
  TempDir dir;
  const std::string thresholds = "AU6=1.8,AU12=1.8";
  auto r = run({"synth", "--out", dir / "data.csv", "--n", "3000", "--seed", "3", "--config-out",
                dir / "synth.json"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "synth.json"));

  r = run({"audit", "--data", dir / "data.csv", "--condition", "AU6,AU12", "--levels", "M,F", "--label", "1",
           "--thresholds", thresholds, "--out", dir / "audit.json", "--csv", dir / "audit.csv", "--curves",
           dir / "curves.csv", "--seed", "3"});
  REQUIRE(r.code == 0);
  const auto audit = report::read_json_file(dir / "audit.json");
  CHECK(audit["header"]["command"] == "audit");
  CHECK(audit["header"]["inputs"]["data"] == report::file_digest(dir / "data.csv"));
  CHECK(slurp(dir / "audit.csv").rfind("condition,n_M,", 0) == 0);
  CHECK(fs::exists(dir / "curves.csv"));

  // the same call twice gives the same bytes
  const auto first = slurp(dir / "audit.json");
  REQUIRE(run({"audit", "--data", dir / "data.csv", "--condition", "AU6,AU12", "--levels", "M,F", "--label",
               "1", "--thresholds", thresholds, "--out", dir / "audit.json", "--seed", "3"})
              .code == 0);
  CHECK(slurp(dir / "audit.json") == first);

  r = run({"audit", "--data", dir / "data.csv", "--condition", "AU6,AU12", "--marginal", "--label",
           "fair_label", "--thresholds", thresholds, "--out", dir / "fair.json"});
  REQUIRE(r.code == 0);
  CHECK(report::read_json_file(dir / "fair.json")["report"]["label_column"] == "fair_label");

  r = run({"relabel", "--data", dir / "data.csv", "--condition", "AU6,AU12", "--levels", "M,F", "--label", "1",
           "--thresholds", thresholds, "--seed", "7", "--out", dir / "relabeled.csv", "--fliplog",
           dir / "flips.json"});
  REQUIRE(r.code == 0);
  // thin wrapper: identical to the library call
  CsvSchema schema;
  schema.level_order["gender"] = {"M", "F"};
  const auto ds = binarize(load_dataset(dir / "data.csv", schema).dataset, {{"AU6", 1.8}, {"AU12", 1.8}});
  const auto lib = relabel::relabel_to_parity(ds, {"AU6", "AU12"}, "gender", "1", 7);
  std::ostringstream lib_csv;
  write_csv(lib.dataset, lib_csv);
  CHECK(slurp(dir / "relabeled.csv") == lib_csv.str());

  r = run({"relabel", "--data", dir / "data.csv", "--condition", "AU6,AU12", "--per-cell", "50", "--thresholds",
           thresholds, "--out", dir / "subsample.csv"});
  CHECK(r.code == 0);

  r = run({"train", "--data", dir / "data.csv", "--label", "1", "--thresholds", thresholds, "--lambda", "0",
           "--epochs", "3", "--out", dir / "model.json"});
  REQUIRE(r.code == 0);
  r = run({"train", "--data", dir / "data.csv", "--label", "1", "--thresholds", thresholds, "--lambda", "10",
           "--reduction", "mean", "--margin", "0.5", "--epochs", "3", "--out", dir / "model10.json"});
  REQUIRE(r.code == 0);
  CHECK(report::read_json_file(dir / "model10.json")["config"]["reduction"] == "mean");

  r = run({"eval", "--test", dir / "data.csv", "--model", dir / "model.json", "--label", "fair_label",
           "--thresholds", thresholds, "--positive-group", "F", "--split", "test", "--fair-test", "--out", dir / "eval.json"});
  REQUIRE(r.code == 0);
  const auto eval = report::read_json_file(dir / "eval.json");
  CHECK(eval["result"]["eval"]["disc_abs"].get<double>() >= 0.0);

  const nlohmann::json runs = {
      {"data", "data.csv"},
      {"label", "1"},
      {"positive_group", "F"},
      {"levels", {"M", "F"}},
      {"thresholds", {{"AU6", 1.8}, {"AU12", 1.8}}},
      {"test_label_column", "fair_label"},
      {"defaults", {{"epochs", 2}, {"reduction", "mean"}, {"margin", 0.5}}},
      {"runs", {{{"name", "baseline"}, {"lambda", 0}}, {{"name", "aucfer"}, {"lambda", 10}}}}};
  report::write_json_file(dir / "runs.json", runs);
  r = run({"compare", "--configs", dir / "runs.json", "--seeds", "2", "--out", dir / "table.csv", "--json",
           dir / "compare.json"});
  REQUIRE(r.code == 0);
  const auto table = slurp(dir / "table.csv");
  CHECK(table.rfind("method,lambda,accuracy,f1,disc,", 0) == 0);
  CHECK(table.find("\nbaseline,0.00,") != std::string::npos);
  CHECK(table.find("\naucfer,10.00,") != std::string::npos);
}

TEST_CASE("calibrate subcommand") {
  TempDir dir;
  {
    std::ofstream csv(dir / "truth.csv");
    csv << "id,AU6,AU6_truth,gender\n";
    for (int i = 0; i < 200; ++i) {
      const bool f = i % 2;
      const int truth = (i / 2) % 3 == 0;
      const double v = (truth ? 2.5 : 1.0) + (f ? 0.6 : 0.0) + 0.01 * (i % 17);
      csv << i << ',' << v << ',' << truth << ',' << (f ? "F" : "M") << '\n';
    }
  }
  const auto r = run({"calibrate", "--data", dir / "truth.csv", "--truth-cols", "AU6", "--out", dir / "calib.json"});
  REQUIRE(r.code == 0);
  const auto calib = report::read_json_file(dir / "calib.json");
  const auto& au6 = calib["results"][0];
  CHECK(au6["au"] == "AU6");
  CHECK(au6["per_group_accuracy"]["F"] == 1.0);
  CHECK(au6["per_group_accuracy"]["M"] == 1.0);
  CHECK(au6["per_group_thresholds"]["F"].get<double>() > au6["per_group_thresholds"]["M"].get<double>());

  // per-group thresholds feed back into audit
  std::ofstream(dir / "data.csv") << "id,AU6,label,gender\na,1.5,1,F\nb,2.0,0,M\nc,3.1,1,F\nd,2.9,0,M\n";
  CHECK(run({"audit", "--data", dir / "data.csv", "--condition", "AU6", "--label", "1", "--thresholds",
             dir / "calib.json", "--per-group-thresholds", "--out", dir / "a.json"})
            .code == 0);
  CHECK(run({"calibrate", "--data", dir / "truth.csv", "--truth-cols", "AU12", "--out", dir / "c.json"}).code ==
        cli::kExitInvalid);
}
