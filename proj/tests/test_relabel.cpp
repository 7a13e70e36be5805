#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "aucal/audit.hpp"
#include "aucal/error.hpp"
#include "aucal/relabel.hpp"
#include "aucal/rng.hpp"
#include "support.hpp"

using namespace aucal;
using namespace aucal::relabel;

namespace {

struct Stratum {
  int au6, au12;
  std::string level;
  int count, positives;
};

Dataset build(const std::vector<Stratum>& strata) {
  std::ostringstream csv;
  csv << "id,AU6,AU12,label,gender,f0\n";
  int id = 0;
  for (const auto& s : strata) {
    for (int i = 0; i < s.count; ++i) {
      csv << "r" << id << ',' << (s.au6 ? 3.5 : 0.5) << ',' << (s.au12 ? 3.0 : 1.0) << ','
          << (i < s.positives ? "happy" : "neutral") << ',' << s.level << ',' << id * 0.01 << '\n';
      ++id;
    }
  }
  CsvSchema schema;
  schema.level_order["gender"] = {"M", "F"};
  return binarize(test::parse_csv(csv.str(), schema), {{"AU6", 2.0}, {"AU12", 2.0}});
}

// Random strata sizes and positive rates.
Dataset random_dataset(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Stratum> strata;
  for (int cell = 0; cell < 4; ++cell) {
    for (const char* level : {"M", "F"}) {
      const int n = 1 + static_cast<int>(rng.below(300));
      const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(n) + 1));
      strata.push_back({cell >> 1, cell & 1, level, n, k});
    }
  }
  return build(strata);
}

int positives(const Dataset& ds) {
  const int target = ds.target_class("happy");
  int k = 0;
  for (const auto& r : ds.records()) k += r.label == target;
  return k;
}

}  // namespace

TEST_CASE("forced arithmetic example") {
  const auto ds = build({{1, 1, "M", 100, 40}, {1, 1, "F", 100, 60}});
  const auto out = relabel_to_parity(ds, {"AU6", "AU12"}, "gender", "happy", 7);
  int to_pos = 0, to_neg = 0;
  for (const auto& f : out.log.flips) {
    CHECK(f.cell == "AU6=1,AU12=1");
    if (f.direction == FlipDirection::to_positive) {
      CHECK(f.level == "M");
      ++to_pos;
    } else {
      CHECK(f.level == "F");
      ++to_neg;
    }
  }
  CHECK(to_pos == 10);
  CHECK(to_neg == 10);
  const auto report = audit::conditional_bias_report(out.dataset, {{"AU6", "AU12"}, false}, "gender",
                                                     "happy");
  for (const auto& c : report.cells) {
    if (c.condition != "AU6=1,AU12=1") continue;
    CHECK(*c.groups[0].proportion == 0.5);
    CHECK(*c.groups[1].proportion == 0.5);
    CHECK(c.test->p_value == 1.0);
  }
}

TEST_CASE("already fair cells get no flips") {
  const auto ds = build({{1, 1, "M", 100, 50}, {1, 1, "F", 60, 30}, {0, 0, "M", 10, 0}, {0, 0, "F", 10, 0}});
  const auto out = relabel_to_parity(ds, {"AU6", "AU12"}, "gender", "happy", 1);
  CHECK(out.log.flips.empty());
  CHECK(out.dataset == ds);
}

TEST_CASE("flip counts round half to even") {
  // p* = 25/40; M: 10 * (0.625 - 0.5) = 1.25 -> 1; F: 30 * (2/3 - 0.625) = 1.25 -> 1
  const auto a = relabel_to_parity(build({{1, 0, "M", 10, 5}, {1, 0, "F", 30, 20}}), {"AU6", "AU12"},
                                   "gender", "happy", 3);
  CHECK(a.log.flips.size() == 2);
  // p* = 3/4 with n = 2 each: M 0.5 -> 1.5 flips -> 2; F 1.0 -> 0.5 flips -> 0
  const auto b = relabel_to_parity(build({{1, 0, "M", 2, 1}, {1, 0, "F", 2, 2}}), {"AU6", "AU12"},
                                   "gender", "happy", 3);
  std::map<std::string, std::int64_t> planned;
  for (const auto& c : b.log.cells) planned[c.level] = c.planned_flips;
  CHECK(planned["M"] == 0);  // 0.5 rounds to 0
  CHECK(planned["F"] == 0);
}

TEST_CASE("post-relabel gaps are bounded and only labels change") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto ds = random_dataset(seed);
    const auto out = relabel_to_parity(ds, {"AU6", "AU12"}, "gender", "happy", seed);
    REQUIRE(out.dataset.size() == ds.size());
    std::size_t changed = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto a = ds[i];
      const auto& b = out.dataset[i];
      if (a.label != b.label) ++changed;
      a.label = b.label;
      CHECK(a == b);
    }
    CHECK(changed == out.log.flips.size());
    std::int64_t planned = 0;
    for (const auto& c : out.log.cells) planned += std::abs(c.planned_flips) - c.deficit;
    CHECK(planned == static_cast<std::int64_t>(out.log.flips.size()));

    const auto report = audit::conditional_bias_report(out.dataset, {{"AU6", "AU12"}, false},
                                                       "gender", "happy");
    for (const auto& c : report.cells) {
      if (!c.delta) continue;
      const double bound = 1.0 / std::min(c.groups[0].count, c.groups[1].count);
      CAPTURE(seed);
      CAPTURE(c.condition);
      CHECK(std::abs(*c.delta) <= bound + 1e-12);
    }
    // compensating flips keep the total within one per cell
    CHECK(std::abs(positives(out.dataset) - positives(ds)) <= 4);
  }
}

TEST_CASE("flips are reproducible per seed") {
  const auto ds = random_dataset(99);
  const auto a = relabel_to_parity(ds, {"AU6", "AU12"}, "gender", "happy", 5);
  const auto b = relabel_to_parity(ds, {"AU6", "AU12"}, "gender", "happy", 5);
  const auto c = relabel_to_parity(ds, {"AU6", "AU12"}, "gender", "happy", 6);
  REQUIRE(a.log.flips.size() == b.log.flips.size());
  for (std::size_t i = 0; i < a.log.flips.size(); ++i) CHECK(a.log.flips[i].id == b.log.flips[i].id);
  CHECK(a.dataset == b.dataset);
  CHECK_FALSE(a.dataset == c.dataset);
}

TEST_CASE("relabel guards") {
  const auto raw = test::parse_csv("id,AU6,label,gender\na,1,1,F\nb,2,0,M\n");
  CHECK_THROWS_AS(relabel_to_parity(raw, {"AU6"}, "gender", "1", 1), NotBinarized);
}

TEST_CASE("balanced subsample") {
  const auto ds = build({{1, 1, "M", 50, 20}, {1, 1, "F", 40, 30}, {0, 0, "M", 10, 5}, {0, 0, "F", 35, 3}});
  const auto out = balanced_subsample(ds, {"AU6", "AU12"}, "gender", 30, 4);
  std::map<std::pair<int, int>, int> counts;
  const CellIndexer idx(out.dataset, {"AU6", "AU12"});
  for (const auto& r : out.dataset.records()) ++counts[{static_cast<int>(idx.code(r)), r.groups[0]}];
  CHECK(counts[{3, 0}] == 30);
  CHECK(counts[{3, 1}] == 30);
  CHECK(counts[{0, 0}] == 10);
  CHECK(counts[{0, 1}] == 30);
  // empty strata are reported too
  int populated = 0;
  for (const auto& s : out.shortfalls) {
    CHECK(s.requested == 30);
    if (s.available == 0) continue;
    ++populated;
    CHECK(s.cell == "AU6=0,AU12=0");
    CHECK(s.level == "M");
    CHECK(s.available == 10);
  }
  CHECK(populated == 1);

  const auto again = balanced_subsample(ds, {"AU6", "AU12"}, "gender", 30, 4);
  CHECK(again.dataset == out.dataset);
  CHECK_THROWS_AS(balanced_subsample(ds, {"AU6", "AU12"}, "gender", 0, 4), InvalidCount);
}
