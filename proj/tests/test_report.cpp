#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "aucal/error.hpp"
#include "aucal/report.hpp"
#include "support.hpp"

using namespace aucal;
using namespace aucal::report;

TEST_CASE("canonical dump") {
  const Json j = {{"b", 1}, {"a", {{"z", 0.1}, {"y", {1, 2, 3}}}}, {"c", std::nan("")}, {"e", Json::array()}};
  const std::string expected =
      "{\n"
      "  \"a\": {\n"
      "    \"y\": [1, 2, 3],\n"
      "    \"z\": 0.10000000000000001\n"
      "  },\n"
      "  \"b\": 1,\n"
      "  \"c\": null,\n"
      "  \"e\": []\n"
      "}\n";
  CHECK(canonical_dump(j) == expected);
  CHECK(canonical_dump(j) == canonical_dump(Json::parse(canonical_dump(j))));
  // 17 significant digits round-trip every double
  const double x = 0.1 + 0.2;
  CHECK(Json::parse(canonical_dump(Json{{"x", x}}))["x"].get<double>() == x);
  CHECK(format_double(1.0 / 3.0) == "0.33333333333333331");
}

TEST_CASE("digests") {
  CHECK(bytes_digest("") == "fnv1a64:cbf29ce484222325");
  CHECK(bytes_digest("a") == "fnv1a64:af63dc4c8601ec8c");
  const auto path = std::filesystem::temp_directory_path() / "aucal_digest_test.txt";
  write_text_file(path, "a");
  CHECK(file_digest(path) == bytes_digest("a"));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(file_digest(path), IoError);
}

TEST_CASE("header") {
  const auto h = to_json(Header{"audit", 7, {{"data", "fnv1a64:00"}}});
  CHECK(h["tool"] == kToolName);
  CHECK(h["version"] == kToolVersion);
  CHECK(h["command"] == "audit");
  CHECK(h["seed"] == 7);
  CHECK(h["inputs"]["data"] == "fnv1a64:00");
}

TEST_CASE("model round trip") {
  const auto params = aucfer::initialize(5, 3, 2, 42);
  aucfer::TrainConfig config;
  config.lambda = 3.5;
  config.margin = 0.25;
  config.reduction = aucfer::TripletReduction::mean;
  config.conditioning = {"AU6"};
  config.target_label = "1";
  const auto j = model_to_json(params, config);
  const auto loaded = model_from_json(Json::parse(canonical_dump(j)));
  CHECK(loaded.params == params);
  CHECK(loaded.config.lambda == 3.5);
  CHECK(loaded.config.margin == 0.25);
  CHECK(loaded.config.reduction == aucfer::TripletReduction::mean);
  CHECK(loaded.config.conditioning == std::vector<std::string>{"AU6"});
  CHECK(canonical_dump(model_to_json(loaded.params, loaded.config)) == canonical_dump(j));

  auto broken = j;
  broken["w1"] = Json::array();
  CHECK_THROWS_AS(model_from_json(broken), InvalidConfig);
  CHECK_THROWS_AS(model_from_json(Json::object()), InvalidConfig);
  CHECK_THROWS_AS(train_config_from_json(Json{{"reduction", "median"}}), InvalidConfig);
}

TEST_CASE("bias report csv is sorted with one row per cell") {
  CsvSchema schema;
  schema.level_order["gender"] = {"M", "F"};
  std::ostringstream csv;
  csv << "id,AU6,AU12,label,gender\n";
  int id = 0;
  for (int cell = 0; cell < 4; ++cell) {
    for (int i = 0; i < 60; ++i) {
      csv << id++ << ',' << (cell & 2 ? 3 : 1) << ',' << (cell & 1 ? 3 : 1) << ',' << (i % (2 + cell) == 0)
          << ',' << (i % 2 ? "F" : "M") << '\n';
    }
  }
  const auto ds = binarize(test::parse_csv(csv.str(), schema), {{"AU6", 2.0}, {"AU12", 2.0}});
  auto r = audit::conditional_bias_report(ds, {{"AU6", "AU12"}, false}, "gender", "1");
  std::reverse(r.cells.begin(), r.cells.end());
  std::ostringstream out;
  write_bias_csv(r, out);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "condition,n_M,positives_M,p_M,n_F,positives_F,p_F,delta,chi2,dof,p_value,status");
  std::vector<std::string> conditions;
  while (std::getline(lines, line)) conditions.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
  REQUIRE(conditions.size() == 4);
  CHECK(conditions[0] == "\"AU6=0,AU12=0\"");
  CHECK(conditions[3] == "\"AU6=1,AU12=1\"");

  std::ostringstream again;
  write_bias_csv(r, again);
  CHECK(again.str() == out.str());
  CHECK(canonical_dump(to_json(r)) == canonical_dump(to_json(r)));
}

TEST_CASE("curves csv") {
  std::vector<audit::BiasCurve> curves{{"AU12", "F", {0.0, 1.0}, {0.2, 0.4}, {0.1, 0.3}, {0.3, 0.5}},
                                       {"AU12", "M", {0.0, 1.0}, {0.1, 0.2}, {0.05, 0.15}, {0.15, 0.25}}};
  std::ostringstream out;
  write_curves_csv(curves, out);
  std::istringstream lines(out.str());
  std::string header, row;
  std::getline(lines, header);
  CHECK(header == "au,intensity,F,F_lower,F_upper,M,M_lower,M_upper");
  std::getline(lines, row);
  CHECK(row.rfind("AU12,0,0.20000000000000001,", 0) == 0);
  int rows = 1;
  while (std::getline(lines, row)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("json files") {
  const auto dir = std::filesystem::temp_directory_path() / "aucal_report_test";
  std::filesystem::create_directories(dir);
  write_json_file(dir / "x.json", Json{{"a", 1}});
  CHECK(read_json_file(dir / "x.json")["a"] == 1);
  write_text_file(dir / "bad.json", "{nope");
  CHECK_THROWS_AS(read_json_file(dir / "bad.json"), InvalidConfig);
  CHECK_THROWS_AS(read_json_file(dir / "missing.json"), IoError);
  CHECK_THROWS_AS(write_text_file(dir / "no" / "such" / "dir.txt", "x"), IoError);
  std::filesystem::remove_all(dir);
}
