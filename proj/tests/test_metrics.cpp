#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "aucal/error.hpp"
#include "aucal/metrics.hpp"
#include "aucal/rng.hpp"
#include "support.hpp"

using namespace aucal;
using namespace aucal::metrics;

namespace {

struct Scored {
  Dataset dataset;
  std::vector<double> scores;
};

// Random records over two groups with a positive-rate gap and scores that
// partly track the label.
Scored random_scored(std::uint64_t seed, std::size_t n, double easy_share = 0.1) {
  Rng rng(seed);
  std::ostringstream csv;
  csv << "id,AU6,AU12,label,gender,f0\n";
  std::vector<double> scores;
  for (std::size_t i = 0; i < n; ++i) {
    const bool f = rng.bernoulli(0.5);
    const int y = rng.bernoulli(f ? 0.45 : 0.3) ? 1 : 0;
    double s = std::clamp(0.5 + (y ? 0.2 : -0.2) + 0.2 * rng.normal(), 0.001, 0.999);
    if (rng.bernoulli(easy_share)) s = y ? 0.999999 : 1e-7;
    scores.push_back(s);
    csv << i << ',' << rng.uniform(0, 5) << ',' << rng.uniform(0, 5) << ',' << y << ','
        << (f ? "F" : "M") << ",0\n";
  }
  return {binarize(test::parse_csv(csv.str()), {{"AU6", 2.5}, {"AU12", 2.5}}), scores};
}

FairTestOptions options() {
  FairTestOptions o;
  o.target_label = "1";
  return o;
}

}  // namespace

TEST_CASE("discrimination from reported rates") {
  const auto raw = cv_discrimination_from_rates(0.3916, 0.3342);
  CHECK(raw.disc_signed == doctest::Approx(0.0574).epsilon(1e-9));
  const auto relabeled = cv_discrimination_from_rates(0.3655, 0.3603);
  CHECK(relabeled.disc_signed == doctest::Approx(0.0052).epsilon(1e-9));
  CHECK(cv_discrimination_from_rates(0.3, 0.3).disc_abs == 0.0);
  CHECK(cv_discrimination_from_rates(0.2, 0.3).disc_abs == doctest::Approx(0.1));
  CHECK(cv_discrimination_from_rates(0.2, 0.3).disc_signed == doctest::Approx(-0.1));
}

TEST_CASE("discrimination from predictions") {
  const std::vector<int> pred{1, 1, 0, 0, 1, 0, 0, 0};
  const std::vector<std::string> g{"F", "F", "F", "F", "M", "M", "M", "M"};
  const auto d = cv_discrimination(pred, g, "F");
  CHECK(d.disc_signed == doctest::Approx(0.25));
  CHECK(cv_discrimination(pred, g, "M").disc_signed == doctest::Approx(-0.25));
  CHECK_THROWS_AS(cv_discrimination(pred, g, "X"), MissingGroup);
  const std::vector<std::string> three{"F", "F", "F", "M", "M", "M", "O", "O"};
  CHECK_THROWS_AS(cv_discrimination(pred, three, "F"), MissingGroup);
}

TEST_CASE("threshold selection") {
  const auto fit = select_threshold(std::vector<double>{0.1, 0.4, 0.6, 0.9}, std::vector<int>{0, 0, 1, 1});
  CHECK(fit.threshold == doctest::Approx(0.5));
  CHECK(fit.accuracy == 1.0);
  // anti-correlated: best is predicting everything negative or positive
  const auto anti = select_threshold(std::vector<double>{0.9, 0.8, 0.2}, std::vector<int>{0, 0, 1});
  CHECK(anti.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(anti.threshold > 0.9);
  CHECK_THROWS_AS(select_threshold(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), SingleClass);
  CHECK_THROWS_AS(select_threshold(std::vector<double>{0.3, 0.3}, std::vector<int>{0, 1}), SingleClass);
}

TEST_CASE("discrimination survives monotone score transforms") {
  const auto s = random_scored(3, 500, 0.0);
  std::vector<double> squashed;
  for (double v : s.scores) squashed.push_back(std::pow(v, 3.0) * 7.0 - 2.0);
  const auto a = evaluate(s.scores, s.dataset, "gender", "F", "1");
  const auto b = evaluate(squashed, s.dataset, "gender", "F", "1");
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.disc_signed == b.disc_signed);
  CHECK(a.f1 == b.f1);
}

TEST_CASE("evaluate on perfect group-blind scores") {
  std::ostringstream csv;
  csv << "id,AU6,label,gender\n";
  std::vector<double> scores;
  for (int i = 0; i < 40; ++i) {
    const int y = i % 4 < 2;
    csv << i << ",1," << y << ',' << (i % 2 ? "F" : "M") << '\n';
    scores.push_back(y ? 0.9 : 0.1);
  }
  const auto ds = test::parse_csv(csv.str());
  const auto r = evaluate(scores, ds, "gender", "F", "1");
  CHECK(r.accuracy == 1.0);
  CHECK(r.f1 == 1.0);
  CHECK(r.disc_abs == 0.0);
  CHECK(r.per_group_positive_rate.at("F") == r.per_group_positive_rate.at("M"));
  CHECK_THROWS_AS(evaluate(std::vector<double>(40, 0.5), ds, "gender", "F", "1"), SingleClass);
  CHECK_THROWS_AS(evaluate(std::vector<double>(3, 0.5), ds, "gender", "F", "1"), Misaligned);
}

TEST_CASE("fair test set equalizes positive rates") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = random_scored(seed, 800);
    const auto fair = build_fair_test_set(s.dataset, s.scores, options());
    std::size_t easy = 0;
    for (double v : s.scores) easy += v > 0.99999 || v < 1e-5;
    CHECK(fair.pruned_easy == easy);
    CHECK(fair.kept.size() + fair.pruned_easy + fair.removed_for_balance == s.dataset.size());
    std::map<int, std::pair<int, int>> nk;
    for (const auto& r : fair.dataset.records()) {
      auto& [n, k] = nk[r.groups[0]];
      ++n;
      k += r.label == 1;
    }
    const double rate_f = static_cast<double>(nk[0].second) / nk[0].first;
    const double rate_m = static_cast<double>(nk[1].second) / nk[1].first;
    CHECK(std::abs(rate_f - rate_m) <= 1.0 / std::min(nk[0].first, nk[1].first));
    CHECK(fair.positive_rate.at("F") == rate_f);
    // balancing only removes positives of the higher-rate group
    for (std::size_t i = 1; i < fair.kept.size(); ++i) CHECK(fair.kept[i - 1] < fair.kept[i]);
  }
}

TEST_CASE("fair test set pruning rules") {
  const auto s = random_scored(4, 400, 0.0);
  auto o = options();
  const auto none = build_fair_test_set(s.dataset, s.scores, o);
  CHECK(none.pruned_easy == 0);

  auto low_only = random_scored(5, 400, 0.2);
  o.easy_high.reset();
  o.easy_low = 0.05;
  const auto anger = build_fair_test_set(low_only.dataset, low_only.scores, o);
  std::size_t low = 0;
  for (double v : low_only.scores) low += v < 0.05;
  CHECK(anger.pruned_easy == low);

  o.easy_high = 0.01;
  CHECK_THROWS_AS(build_fair_test_set(s.dataset, s.scores, o), InvalidConfig);
  CHECK_THROWS_AS(build_fair_test_set(s.dataset, std::vector<double>(3), options()), Misaligned);

  const auto no_pos = test::parse_csv("id,AU6,label,gender\na,1,0,F\nb,1,1,M\nc,1,0,F\n");
  CHECK_THROWS_AS(build_fair_test_set(no_pos, std::vector<double>(3, 0.5), options()),
                  InfeasibleBalance);
}

TEST_CASE("cell-count balancing matches the per-cell minimum") {
  const auto s = random_scored(6, 1000);
  auto o = options();
  o.mode = BalanceMode::balance_cell_counts;
  const auto fair = build_fair_test_set(s.dataset, s.scores, o);
  const CellIndexer idx(s.dataset, {"AU6", "AU12"});
  std::map<std::pair<std::uint32_t, int>, int> before, after;
  for (std::size_t i = 0; i < s.dataset.size(); ++i) {
    const double v = s.scores[i];
    if (v > 0.99999 || v < 1e-5) continue;
    ++before[{idx.code(s.dataset[i]), s.dataset[i].groups[0]}];
  }
  for (const auto& r : fair.dataset.records()) ++after[{idx.code(r), r.groups[0]}];
  for (std::uint32_t cell = 0; cell < 4; ++cell) {
    const int expected = std::min(before[{cell, 0}], before[{cell, 1}]);
    CHECK(after[{cell, 0}] == expected);
    CHECK(after[{cell, 1}] == expected);
  }
  const auto again = build_fair_test_set(s.dataset, s.scores, o);
  CHECK(again.kept == fair.kept);
}

TEST_CASE("summary") {
  const std::vector<double> v{0.02, 0.05, 0.1, 0.06, 0.065};
  const auto s = summarize(v);
  CHECK(s.n == 5);
  CHECK(s.mean == doctest::Approx(0.059));
  CHECK(s.sd == doctest::Approx(0.028809720581775865));
  CHECK(s.format() == "0.059 ± 0.029");
  CHECK(summarize(std::vector<double>{0.4}).sd == 0.0);
  CHECK(summarize(std::vector<double>{}).n == 0);
}
