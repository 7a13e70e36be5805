#include "aucal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

#include "aucal/error.hpp"
#include "aucal/rng.hpp"

namespace aucal::metrics {
namespace {

std::int64_t round_ratio(std::int64_t num, std::int64_t den) {
  // den > 0, num >= 0
  std::int64_t q = num / den;
  const std::int64_t r = num % den;
  if (2 * r > den || (2 * r == den && (q % 2 != 0))) ++q;
  return q;
}

std::vector<int> binary_labels(const Dataset& dataset, const std::string& target_label) {
  const int target = dataset.target_class(target_label);
  std::vector<int> labels;
  labels.reserve(dataset.size());
  for (const auto& r : dataset.records()) labels.push_back(r.label == target ? 1 : 0);
  return labels;
}

}  // namespace

Discrimination cv_discrimination_from_rates(double positive_group_rate, double other_rate) {
  const double d = positive_group_rate - other_rate;
  return {d, std::abs(d)};
}

Discrimination cv_discrimination(std::span<const int> predictions,
                                 std::span<const std::string> groups,
                                 const std::string& positive_group) {
  if (predictions.size() != groups.size()) throw LengthMismatch("predictions/groups mismatch");
  const std::set<std::string> levels(groups.begin(), groups.end());
  if (!levels.contains(positive_group)) {
    throw MissingGroup("group '" + positive_group + "' has no predictions");
  }
  if (levels.size() != 2) throw MissingGroup("discrimination needs exactly two groups");
  long long n_pos = 0, k_pos = 0, n_other = 0, k_other = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i] == positive_group) {
      ++n_pos;
      k_pos += predictions[i] == 1;
    } else {
      ++n_other;
      k_other += predictions[i] == 1;
    }
  }
  return cv_discrimination_from_rates(static_cast<double>(k_pos) / static_cast<double>(n_pos),
                                      static_cast<double>(k_other) / static_cast<double>(n_other));
}

stats::ThresholdFit select_threshold(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw LengthMismatch("scores/labels mismatch");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<long>(labels.size())) {
    throw SingleClass("threshold selection needs both classes");
  }
  // Constant scores admit only the predict-all and predict-none rules.
  if (std::adjacent_find(scores.begin(), scores.end(), std::not_equal_to<>()) == scores.end()) {
    throw SingleClass("scores take a single value");
  }
  return stats::max_accuracy_threshold(scores, labels);
}

FairTestSet build_fair_test_set(const Dataset& dataset, std::span<const double> scores,
                                const FairTestOptions& options) {
  if (scores.size() != dataset.size()) throw Misaligned("scores do not align with records");
  if (options.easy_high && !(options.easy_low < *options.easy_high)) {
    throw InvalidConfig("easy_low must be below easy_high");
  }
  const std::size_t attr = dataset.attribute_index(options.group_attr);
  const auto& levels = dataset.attributes()[attr].levels;
  const int target = dataset.target_class(options.target_label);

  FairTestSet out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const bool easy_positive = options.easy_high && scores[i] > *options.easy_high;
    const bool easy_negative = scores[i] < options.easy_low;
    if (easy_positive || easy_negative) {
      ++out.pruned_easy;
    } else {
      kept.push_back(i);
    }
  }

  const Rng root = Rng(options.seed).child("fair_test_set");
  std::vector<bool> drop(dataset.size(), false);
  if (options.mode == BalanceMode::balance_positive_rate) {
    std::vector<std::vector<std::size_t>> positives(levels.size());
    std::vector<std::int64_t> count(levels.size(), 0);
    for (auto i : kept) {
      const auto g = static_cast<std::size_t>(dataset[i].groups[attr]);
      ++count[g];
      if (dataset[i].label == target) positives[g].push_back(i);
    }
    // Lowest positive rate k_m / n_m among populated levels.
    std::int64_t k_min = 0, n_min = 0;
    for (std::size_t g = 0; g < levels.size(); ++g) {
      if (count[g] == 0) continue;
      const auto k = static_cast<std::int64_t>(positives[g].size());
      if (k == 0) throw InfeasibleBalance("level '" + levels[g] + "' has no positives");
      if (n_min == 0 || k * n_min < k_min * count[g]) {
        k_min = k;
        n_min = count[g];
      }
    }
    for (std::size_t g = 0; g < levels.size() && n_min > k_min; ++g) {
      const auto k = static_cast<std::int64_t>(positives[g].size());
      const std::int64_t excess = k * n_min - k_min * count[g];
      if (count[g] == 0 || excess <= 0) continue;
      // Removing x positives: (k - x) / (n - x) = k_m / n_m at x = excess / (n_m - k_m).
      const std::int64_t x = std::min(k, round_ratio(excess, n_min - k_min));
      Rng rng = root.child(levels[g]);
      for (auto pick : rng.sample_indices(positives[g].size(), static_cast<std::uint64_t>(x))) {
        drop[positives[g][pick]] = true;
      }
    }
  } else {
    const CellIndexer indexer(dataset, options.conditioning);
    std::vector<std::vector<std::vector<std::size_t>>> strata(
        indexer.cell_count(), std::vector<std::vector<std::size_t>>(levels.size()));
    for (auto i : kept) {
      strata[indexer.code(dataset[i])][static_cast<std::size_t>(dataset[i].groups[attr])].push_back(i);
    }
    for (std::uint32_t code = 0; code < strata.size(); ++code) {
      std::size_t smallest = SIZE_MAX;
      for (const auto& members : strata[code]) smallest = std::min(smallest, members.size());
      for (std::size_t g = 0; g < levels.size(); ++g) {
        const auto& members = strata[code][g];
        if (members.size() <= smallest) continue;
        Rng rng = root.child(indexer.key(code).to_string()).child(levels[g]);
        std::vector<bool> keep_member(members.size(), false);
        for (auto pick : rng.sample_indices(members.size(), smallest)) keep_member[pick] = true;
        for (std::size_t m = 0; m < members.size(); ++m) {
          if (!keep_member[m]) drop[members[m]] = true;
        }
      }
    }
  }

  std::vector<AnnotatedRecord> records;
  std::vector<std::int64_t> n(levels.size(), 0), k(levels.size(), 0);
  for (auto i : kept) {
    if (drop[i]) {
      ++out.removed_for_balance;
      continue;
    }
    out.kept.push_back(i);
    records.push_back(dataset[i]);
    const auto g = static_cast<std::size_t>(dataset[i].groups[attr]);
    ++n[g];
    k[g] += dataset[i].label == target ? 1 : 0;
  }
  for (std::size_t g = 0; g < levels.size(); ++g) {
    if (n[g] > 0) out.positive_rate[levels[g]] = static_cast<double>(k[g]) / static_cast<double>(n[g]);
  }
  out.dataset = dataset.with_records(std::move(records));
  return out;
}

EvalResult evaluate(std::span<const double> scores, const Dataset& test,
                    const std::string& group_attr, const std::string& positive_group,
                    const std::string& target_label) {
  if (scores.size() != test.size()) throw Misaligned("scores do not align with records");
  const auto labels = binary_labels(test, target_label);
  const auto fit = select_threshold(scores, labels);
  const std::size_t attr = test.attribute_index(group_attr);
  const auto& levels = test.attributes()[attr].levels;

  EvalResult out;
  out.threshold = fit.threshold;
  out.accuracy = fit.accuracy;
  std::vector<int> predictions(scores.size());
  std::vector<std::string> groups(scores.size());
  long long tp = 0, fp = 0, fn = 0;
  std::map<std::string, std::pair<long long, long long>> rate_counts;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    predictions[i] = scores[i] > fit.threshold ? 1 : 0;
    groups[i] = levels[static_cast<std::size_t>(test[i].groups[attr])];
    tp += predictions[i] == 1 && labels[i] == 1;
    fp += predictions[i] == 1 && labels[i] == 0;
    fn += predictions[i] == 0 && labels[i] == 1;
    auto& [n, k] = rate_counts[groups[i]];
    ++n;
    k += predictions[i];
  }
  out.f1 = stats::f1_score(tp, fp, fn);
  for (const auto& [level, nk] : rate_counts) {
    out.per_group_positive_rate[level] =
        static_cast<double>(nk.second) / static_cast<double>(nk.first);
  }
  const auto disc = cv_discrimination(predictions, groups, positive_group);
  out.disc_signed = disc.disc_signed;
  out.disc_abs = disc.disc_abs;
  return out;
}

EvalResult evaluate(const aucfer::ModelParams& params, const Dataset& test,
                    const std::string& group_attr, const std::string& positive_group,
                    const std::string& target_label) {
  const auto scores = aucfer::predict_scores(params, test);
  return evaluate(scores, test, group_attr, positive_group, target_label);
}

std::string Summary::format(int precision) const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", precision, mean, precision, sd);
  return buf;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
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

}  // namespace aucal::metrics
