#include "aucal/calibrate.hpp"

#include <algorithm>
#include <set>

#include "aucal/audit.hpp"
#include "aucal/error.hpp"

namespace aucal::calibrate {
namespace {

void check_truth(std::span<const int> truth) {
  for (int t : truth) {
    if (t != 0 && t != 1) throw InvalidLabel("truth presence must be 0 or 1");
  }
}

std::vector<int> predict(std::span<const double> values, double threshold) {
  std::vector<int> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] > threshold ? 1 : 0;
  return out;
}

}  // namespace

ThresholdFit calibrate_global(std::span<const double> intensities, std::span<const int> truth) {
  if (intensities.size() != truth.size()) {
    throw LengthMismatch("intensities and truth differ in length");
  }
  if (intensities.empty()) throw EmptyInput("no intensities to calibrate");
  check_truth(truth);
  return stats::max_accuracy_threshold(intensities, truth);
}

double ParityCheck::accuracy_of(const std::string& level) const {
  const auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) throw UnknownGroupLevel("no level " + level);
  return accuracy[static_cast<std::size_t>(it - levels.begin())];
}

ParityCheck accuracy_parity_check(std::span<const int> predicted, std::span<const int> truth,
                                  std::span<const std::string> groups) {
  if (predicted.size() != truth.size() || truth.size() != groups.size()) {
    throw LengthMismatch("predicted, truth and groups differ in length");
  }
  ParityCheck out;
  const std::set<std::string> level_set(groups.begin(), groups.end());
  out.levels.assign(level_set.begin(), level_set.end());
  const std::size_t k = out.levels.size();
  std::vector<long long> tp(k), fp(k), fn(k);
  out.correct.assign(k, 0);
  out.count.assign(k, 0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto g = static_cast<std::size_t>(
        std::lower_bound(out.levels.begin(), out.levels.end(), groups[i]) - out.levels.begin());
    ++out.count[g];
    if (predicted[i] == truth[i]) ++out.correct[g];
    if (predicted[i] == 1 && truth[i] == 1) ++tp[g];
    if (predicted[i] == 1 && truth[i] == 0) ++fp[g];
    if (predicted[i] == 0 && truth[i] == 1) ++fn[g];
  }
  for (std::size_t g = 0; g < k; ++g) {
    out.accuracy.push_back(static_cast<double>(out.correct[g]) / static_cast<double>(out.count[g]));
    out.f1.push_back(stats::f1_score(tp[g], fp[g], fn[g]));
  }
  out.pairwise_p.assign(k, std::vector<double>(k, 1.0));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double p =
          audit::two_proportion_test(out.correct[a], out.count[a], out.correct[b], out.count[b]);
      out.pairwise_p[a][b] = out.pairwise_p[b][a] = p;
      out.p_value = std::min(out.p_value, p);
    }
  }
  return out;
}

CalibrationResult calibrate_per_group(const std::string& au_id, std::span<const double> intensities,
                                      std::span<const int> truth,
                                      std::span<const std::string> groups) {
  if (groups.size() != intensities.size()) throw LengthMismatch("groups differ in length");
  CalibrationResult result;
  result.au_id = au_id;
  const auto global = calibrate_global(intensities, truth);
  result.global_threshold = global.threshold;
  result.global_accuracy = global.accuracy;

  const auto raw = accuracy_parity_check(predict(intensities, global.threshold), truth, groups);
  for (std::size_t g = 0; g < raw.levels.size(); ++g) {
    result.raw_accuracy[raw.levels[g]] = raw.accuracy[g];
  }
  result.raw_parity_p_value = raw.p_value;

  std::vector<int> parity_pred, parity_truth;
  std::vector<std::string> parity_groups;
  for (const auto& level : raw.levels) {
    std::vector<double> level_values;
    std::vector<int> level_truth;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i] != level) continue;
      level_values.push_back(intensities[i]);
      level_truth.push_back(truth[i]);
      members.push_back(i);
    }
    const auto positives = std::count(level_truth.begin(), level_truth.end(), 1);
    const bool degenerate = level_truth.size() < 2 || positives == 0 ||
                            positives == static_cast<long>(level_truth.size());
    double threshold = global.threshold;
    if (degenerate) {
      result.degenerate_levels.push_back(level);
    } else {
      threshold = stats::max_accuracy_threshold(level_values, level_truth).threshold;
    }
    result.per_group_thresholds[level] = threshold;
    long long tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      const int pred = level_values[j] > threshold ? 1 : 0;
      correct += pred == level_truth[j] ? 1 : 0;
      tp += pred == 1 && level_truth[j] == 1;
      fp += pred == 1 && level_truth[j] == 0;
      fn += pred == 0 && level_truth[j] == 1;
      if (!degenerate) {
        parity_pred.push_back(pred);
        parity_truth.push_back(level_truth[j]);
        parity_groups.push_back(level);
      }
    }
    result.per_group_accuracy[level] =
        static_cast<double>(correct) / static_cast<double>(members.size());
    result.per_group_f1[level] = stats::f1_score(tp, fp, fn);
  }
  if (!parity_groups.empty()) {
    result.parity_p_value = accuracy_parity_check(parity_pred, parity_truth, parity_groups).p_value;
  }
  return result;
}

}  // namespace aucal::calibrate
