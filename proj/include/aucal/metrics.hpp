#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aucal/aucfer.hpp"
#include "aucal/dataset.hpp"
#include "aucal/stats.hpp"

namespace aucal::metrics {

struct Discrimination {
  double disc_signed = 0.0;  // rate(positive_group) - rate(other group)
  double disc_abs = 0.0;
};

// Calders-Verwer discrimination score between exactly two groups.
Discrimination cv_discrimination(std::span<const int> predictions,
                                 std::span<const std::string> groups,
                                 const std::string& positive_group);
Discrimination cv_discrimination_from_rates(double positive_group_rate, double other_rate);

// Accuracy-maximizing threshold for 1[score > t]. Throws SingleClass when
// the labels hold one class or the scores one value.
stats::ThresholdFit select_threshold(std::span<const double> scores, std::span<const int> labels);

enum class BalanceMode { balance_positive_rate, balance_cell_counts };

struct FairTestOptions {
  std::optional<double> easy_high = 0.99999;  // disabled for the low-only rule
  double easy_low = 1e-5;
  std::string group_attr = "gender";
  std::string target_label = "happy";
  std::vector<std::string> conditioning{"AU6", "AU12"};
  BalanceMode mode = BalanceMode::balance_positive_rate;
  std::uint64_t seed = 7;
};

struct FairTestSet {
  Dataset dataset;
  std::vector<std::size_t> kept;  // source row of every kept record
  std::size_t pruned_easy = 0;
  std::size_t removed_for_balance = 0;
  std::map<std::string, double> positive_rate;  // per level, after balancing
};

// Drops records a reference model finds trivially easy, then balances the
// groups by down-sampling.
FairTestSet build_fair_test_set(const Dataset& dataset, std::span<const double> scores,
                                const FairTestOptions& options);

struct EvalResult {
  double threshold = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::map<std::string, double> per_group_positive_rate;
  double disc_signed = 0.0;
  double disc_abs = 0.0;
};

EvalResult evaluate(std::span<const double> scores, const Dataset& test,
                    const std::string& group_attr, const std::string& positive_group,
                    const std::string& target_label);
EvalResult evaluate(const aucfer::ModelParams& params, const Dataset& test,
                    const std::string& group_attr, const std::string& positive_group,
                    const std::string& target_label);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample (n - 1) standard deviation
  std::size_t n = 0;

  std::string format(int precision = 3) const;  // "0.059 ± 0.035"
};

Summary summarize(std::span<const double> values);

}  // namespace aucal::metrics
