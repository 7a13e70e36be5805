#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "aucal/stats.hpp"

namespace aucal::calibrate {

using stats::ThresholdFit;

// Accuracy-maximizing binarization threshold for one AU against expert
// presence codes.
ThresholdFit calibrate_global(std::span<const double> intensities, std::span<const int> truth);

struct ParityCheck {
  std::vector<std::string> levels;  // sorted
  std::vector<double> accuracy;
  std::vector<double> f1;
  std::vector<long long> correct;
  std::vector<long long> count;
  // Pooled two-proportion z-test on correct counts. With more than two
  // levels p_value is the smallest pairwise value.
  double p_value = 1.0;
  std::vector<std::vector<double>> pairwise_p;

  double accuracy_of(const std::string& level) const;
};

ParityCheck accuracy_parity_check(std::span<const int> predicted, std::span<const int> truth,
                                  std::span<const std::string> groups);

struct CalibrationResult {
  std::string au_id;
  double global_threshold = 0.0;
  double global_accuracy = 0.0;
  // Accuracy per level when every level uses the global threshold.
  std::map<std::string, double> raw_accuracy;
  double raw_parity_p_value = 1.0;
  std::map<std::string, double> per_group_thresholds;
  std::map<std::string, double> per_group_accuracy;
  std::map<std::string, double> per_group_f1;
  double parity_p_value = 1.0;
  // Levels lacking one of the truth classes (or with fewer than two
  // samples). They keep the global threshold and are left out of the
  // parity test.
  std::vector<std::string> degenerate_levels;
};

CalibrationResult calibrate_per_group(const std::string& au_id, std::span<const double> intensities,
                                      std::span<const int> truth,
                                      std::span<const std::string> groups);

}  // namespace aucal::calibrate
