#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aucal/dataset.hpp"

namespace aucal::audit {

// Rows are group levels, columns are label values.
struct ContingencyTable {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<std::int64_t>> counts;
  std::string condition;

  std::int64_t total() const;
};

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

inline constexpr double kDefaultMinExpected = 5.0;

// Pearson chi-square test of independence, no continuity correction.
// Throws InsufficientData when any expected count is below min_expected.
ChiSquareResult chi_square_independence(const ContingencyTable& table,
                                        double min_expected = kDefaultMinExpected);

// Pooled two-sided two-proportion z-test.
double two_proportion_test(std::int64_t k1, std::int64_t n1, std::int64_t k2, std::int64_t n2);

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;  // on max |delta beta|
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd wald_z;
  Eigen::VectorXd p_values;
  Eigen::MatrixXd covariance;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  double score_norm = 0.0;
  std::vector<double> log_likelihood_trace;
};

// Maximum-likelihood logistic regression by Newton/IRLS with step halving.
// The design must carry its own intercept column.
LogisticFit logistic_fit(const Eigen::MatrixXd& design, std::span<const int> labels,
                         const LogisticOptions& options = {});

enum class CellStatus { tested, insufficient_data };
enum class SparseLevelPolicy { mark_insufficient, merge_into_other };

std::string_view to_string(CellStatus status);

struct Conditioning {
  std::vector<std::string> aus;
  bool marginal = false;
};

struct AuditOptions {
  double min_expected = kDefaultMinExpected;
  SparseLevelPolicy sparse_levels = SparseLevelPolicy::mark_insufficient;
  double highlight_alpha = 0.05;
  bool fit_logistic = true;
};

struct GroupProportion {
  std::string level;
  std::int64_t count = 0;
  std::int64_t positives = 0;
  std::optional<double> proportion;  // empty when count == 0
};

struct CellReport {
  std::string condition;  // e.g. "AU6=1,AU12=1" or "AU6=0"
  AuCellKey key;
  std::vector<GroupProportion> groups;
  // Proportion of the second level minus the first; two-level reports only.
  std::optional<double> delta;
  CellStatus status = CellStatus::insufficient_data;
  std::optional<ChiSquareResult> test;
  std::vector<std::string> merged_levels;
  // Level with the highest proportion when the test is significant.
  std::optional<std::string> highlighted_level;
};

struct BiasReport {
  std::string group_attribute;
  std::vector<std::string> levels;
  std::string target_label;
  std::string label_column;
  std::string mode;  // "joint" or "marginal"
  std::vector<std::string> conditioning_aus;
  double min_expected = kDefaultMinExpected;
  std::vector<CellReport> cells;
  std::vector<std::string> logistic_terms;
  std::optional<LogisticFit> logistic;
  std::optional<std::string> logistic_error;
};

// Conditional label proportions per AU cell and group, with a chi-square
// test of label/group independence in every cell and a pooled logistic fit
// of the label on AU intensities plus group indicators.
BiasReport conditional_bias_report(const Dataset& dataset, const Conditioning& conditioning,
                                   const std::string& group_attr, const std::string& target_label,
                                   const AuditOptions& options = {});

// Same as conditional_bias_report for attributes with three or more levels.
BiasReport multi_group_bias_report(const Dataset& dataset, const Conditioning& conditioning,
                                   const std::string& group_attr, const std::string& target_label,
                                   const AuditOptions& options = {});

struct BiasCurve {
  std::string au;
  std::string level;
  std::vector<double> grid;
  std::vector<double> probability;
  std::vector<double> lower;  // 95% band from the delta method on the logit
  std::vector<double> upper;
};

// Per-group univariate logistic curves P(Y=1 | intensity) for each AU.
std::vector<BiasCurve> bias_curves(const Dataset& dataset, const std::vector<std::string>& aus,
                                   const std::string& group_attr, const std::string& target_label,
                                   std::span<const double> grid);

}  // namespace aucal::audit
