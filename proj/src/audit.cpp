#include "aucal/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aucal/error.hpp"
#include "aucal/stats.hpp"

namespace aucal::audit {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - softplus(eta[i]);
  return ll;
}

struct CellCounts {
  std::vector<std::int64_t> count;
  std::vector<std::int64_t> positives;
};

ContingencyTable make_table(const CellCounts& counts, const std::vector<std::string>& levels,
                            const std::string& target, const std::string& condition) {
  ContingencyTable table;
  table.row_labels = levels;
  table.col_labels = {"not " + target, target};
  table.condition = condition;
  for (std::size_t g = 0; g < levels.size(); ++g) {
    table.counts.push_back({counts.count[g] - counts.positives[g], counts.positives[g]});
  }
  return table;
}

// Rows with an expected count below min_expected are pooled into "other".
std::optional<ContingencyTable> merge_sparse_rows(const ContingencyTable& table,
                                                  double min_expected,
                                                  std::vector<std::string>& merged) {
  const std::int64_t total = table.total();
  if (total == 0) return std::nullopt;
  std::vector<std::int64_t> col_sum(table.col_labels.size(), 0);
  for (const auto& row : table.counts) {
    for (std::size_t c = 0; c < row.size(); ++c) col_sum[c] += row[c];
  }
  ContingencyTable kept;
  kept.col_labels = table.col_labels;
  kept.condition = table.condition;
  std::vector<std::int64_t> other(table.col_labels.size(), 0);
  for (std::size_t r = 0; r < table.counts.size(); ++r) {
    std::int64_t row_sum = 0;
    for (auto v : table.counts[r]) row_sum += v;
    bool sparse = false;
    for (auto c : col_sum) {
      const double expected = static_cast<double>(row_sum) * static_cast<double>(c) /
                              static_cast<double>(total);
      sparse = sparse || expected < min_expected;
    }
    if (sparse) {
      merged.push_back(table.row_labels[r]);
      for (std::size_t c = 0; c < other.size(); ++c) other[c] += table.counts[r][c];
    } else {
      kept.row_labels.push_back(table.row_labels[r]);
      kept.counts.push_back(table.counts[r]);
    }
  }
  if (!merged.empty()) {
    kept.row_labels.emplace_back("other");
    kept.counts.push_back(other);
  }
  if (kept.counts.size() < 2) return std::nullopt;
  return kept;
}

void test_cell(CellReport& cell, const ContingencyTable& table, const AuditOptions& options) {
  try {
    cell.test = chi_square_independence(table, options.min_expected);
    cell.status = CellStatus::tested;
    return;
  } catch (const InsufficientData&) {
  }
  if (options.sparse_levels != SparseLevelPolicy::merge_into_other) return;
  std::vector<std::string> merged;
  const auto pooled = merge_sparse_rows(table, options.min_expected, merged);
  if (!pooled || merged.empty()) return;
  try {
    cell.test = chi_square_independence(*pooled, options.min_expected);
    cell.status = CellStatus::tested;
    cell.merged_levels = std::move(merged);
  } catch (const InsufficientData&) {
  }
}

BiasReport build_report(const Dataset& dataset, const Conditioning& conditioning,
                        const std::string& group_attr, const std::string& target_label,
                        const AuditOptions& options) {
  const int target = dataset.target_class(target_label);
  const std::size_t attr = dataset.attribute_index(group_attr);
  const auto& levels = dataset.attributes()[attr].levels;
  const std::size_t k = levels.size();

  BiasReport report;
  report.group_attribute = group_attr;
  report.levels = levels;
  report.target_label = target_label;
  report.label_column = dataset.schema().label_column;
  report.mode = conditioning.marginal ? "marginal" : "joint";
  report.min_expected = options.min_expected;

  std::vector<CellIndexer> indexers;
  if (conditioning.marginal) {
    std::vector<std::string> sorted = conditioning.aus;
    sort_au_ids(sorted);
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (const auto& au : sorted) indexers.emplace_back(dataset, std::vector<std::string>{au});
    report.conditioning_aus = sorted;
  } else {
    indexers.emplace_back(dataset, conditioning.aus);
    report.conditioning_aus = indexers.front().aus();
  }

  for (const auto& indexer : indexers) {
    std::vector<CellCounts> cells(indexer.cell_count(),
                                  CellCounts{std::vector<std::int64_t>(k, 0),
                                             std::vector<std::int64_t>(k, 0)});
    for (const auto& r : dataset.records()) {
      auto& c = cells[indexer.code(r)];
      const auto g = static_cast<std::size_t>(r.groups[attr]);
      ++c.count[g];
      if (r.label == target) ++c.positives[g];
    }
    for (std::uint32_t code = 0; code < cells.size(); ++code) {
      CellReport cell;
      cell.key = indexer.key(code);
      cell.condition = cell.key.to_string();
      for (std::size_t g = 0; g < k; ++g) {
        GroupProportion gp{levels[g], cells[code].count[g], cells[code].positives[g], std::nullopt};
        if (gp.count > 0) {
          gp.proportion = static_cast<double>(gp.positives) / static_cast<double>(gp.count);
        }
        cell.groups.push_back(gp);
      }
      if (k == 2 && cell.groups[0].proportion && cell.groups[1].proportion) {
        cell.delta = *cell.groups[1].proportion - *cell.groups[0].proportion;
      }
      test_cell(cell, make_table(cells[code], levels, target_label, cell.condition), options);
      if (cell.status == CellStatus::tested && cell.test->p_value < options.highlight_alpha) {
        const GroupProportion* best = nullptr;
        for (const auto& gp : cell.groups) {
          if (gp.proportion && (best == nullptr || *gp.proportion > *best->proportion)) best = &gp;
        }
        if (best != nullptr) cell.highlighted_level = best->level;
      }
      report.cells.push_back(std::move(cell));
    }
  }

  if (options.fit_logistic) {
    std::vector<std::size_t> au_pos;
    report.logistic_terms.emplace_back("intercept");
    for (const auto& au : report.conditioning_aus) {
      au_pos.push_back(dataset.au_index(au));
      report.logistic_terms.push_back(au);
    }
    for (std::size_t g = 1; g < k; ++g) report.logistic_terms.push_back(group_attr + "=" + levels[g]);
    const auto n = static_cast<Eigen::Index>(dataset.size());
    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(report.logistic_terms.size()));
    std::vector<int> y(dataset.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& r = dataset[static_cast<std::size_t>(i)];
      Eigen::Index col = 0;
      design(i, col++) = 1.0;
      for (auto p : au_pos) design(i, col++) = r.au_intensities[p];
      for (std::size_t g = 1; g < k; ++g) {
        design(i, col++) = static_cast<std::size_t>(r.groups[attr]) == g ? 1.0 : 0.0;
      }
      y[static_cast<std::size_t>(i)] = r.label == target ? 1 : 0;
    }
    try {
      report.logistic = logistic_fit(design, y);
    } catch (const Error& e) {
      report.logistic_error = e.what();
    }
  }
  return report;
}

}  // namespace

std::int64_t ContingencyTable::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts) {
    for (auto v : row) t += v;
  }
  return t;
}

std::string_view to_string(CellStatus status) {
  return status == CellStatus::tested ? "tested" : "insufficient_data";
}

ChiSquareResult chi_square_independence(const ContingencyTable& table, double min_expected) {
  const std::size_t rows = table.counts.size();
  if (rows < 2) throw InvalidTable("contingency table needs at least two rows");
  const std::size_t cols = table.counts.front().size();
  if (cols < 2) throw InvalidTable("contingency table needs at least two columns");
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (table.counts[r].size() != cols) throw InvalidTable("ragged contingency table");
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = table.counts[r][c];
      if (v < 0) throw InvalidTable("negative count");
      row_sum[r] += static_cast<double>(v);
      col_sum[c] += static_cast<double>(v);
      total += static_cast<double>(v);
    }
  }
  if (total == 0.0) throw InsufficientData("empty contingency table");
  double statistic = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double expected = row_sum[r] * col_sum[c] / total;
      if (expected < min_expected) {
        throw InsufficientData("expected count " + std::to_string(expected) + " below " +
                               std::to_string(min_expected) +
                               (table.condition.empty() ? "" : " in " + table.condition));
      }
      const double diff = static_cast<double>(table.counts[r][c]) - expected;
      statistic += diff * diff / expected;
    }
  }
  ChiSquareResult result;
  result.statistic = statistic;
  result.dof = static_cast<int>((rows - 1) * (cols - 1));
  result.p_value = stats::chi_square_sf(statistic, result.dof);
  return result;
}

double two_proportion_test(std::int64_t k1, std::int64_t n1, std::int64_t k2, std::int64_t n2) {
  if (n1 < 1 || n2 < 1 || k1 < 0 || k2 < 0 || k1 > n1 || k2 > n2) {
    throw InvalidCounts("two-proportion test needs 0 <= k <= n and n >= 1");
  }
  const double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) return 1.0;
  const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  return stats::normal_two_sided_p((p1 - p2) / se);
}

LogisticFit logistic_fit(const Eigen::MatrixXd& design, std::span<const int> labels,
                         const LogisticOptions& options) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw LengthMismatch("design rows and labels differ in length");
  }
  if (n <= p) throw SingularDesign("need more observations than coefficients");
  if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(design).rank() < p) {
    throw SingularDesign("design matrix is rank deficient");
  }
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int v = labels[static_cast<std::size_t>(i)];
    if (v != 0 && v != 1) throw InvalidLabel("logistic labels must be 0 or 1");
    y[i] = v;
  }

  LogisticFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = design * beta;
  double ll = log_likelihood(eta, y);
  fit.log_likelihood_trace.push_back(ll);

  auto pinned = [&](const Eigen::VectorXd& eta_now) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(y[i] - sigmoid(eta_now[i])) > 1e-8) return false;
    }
    return true;
  };

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    Eigen::VectorXd prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(eta[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
    const Eigen::MatrixXd information = design.transpose() * weight.asDiagonal() * design;
    const Eigen::VectorXd score = design.transpose() * (y - prob);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-300) {
      if (pinned(eta)) throw Separation("fitted probabilities pinned to 0/1");
      throw SingularDesign("information matrix is singular");
    }
    const Eigen::VectorXd step = ldlt.solve(score);

    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    Eigen::VectorXd candidate_eta = design * candidate;
    double candidate_ll = log_likelihood(candidate_eta, y);
    for (int halving = 0; halving < 50 && candidate_ll < ll; ++halving) {
      scale *= 0.5;
      candidate = beta + scale * step;
      candidate_eta = design * candidate;
      candidate_ll = log_likelihood(candidate_eta, y);
    }
    if (candidate_ll < ll) {
      // No ascent direction left at working precision.
      candidate = beta;
      candidate_eta = eta;
      candidate_ll = ll;
    }
    const double change = (candidate - beta).cwiseAbs().maxCoeff();
    beta = candidate;
    eta = candidate_eta;
    ll = candidate_ll;
    fit.iterations = iter;
    fit.log_likelihood_trace.push_back(ll);
    if (pinned(eta)) throw Separation("fitted probabilities pinned to 0/1");
    if (change < options.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged && eta.cwiseAbs().maxCoeff() > 30.0) {
    throw Separation("coefficients diverging; the classes are (quasi-)separable");
  }

  Eigen::VectorXd prob(n), weight(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    prob[i] = sigmoid(eta[i]);
    weight[i] = prob[i] * (1.0 - prob[i]);
  }
  const Eigen::MatrixXd information = design.transpose() * weight.asDiagonal() * design;
  fit.covariance = information.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.coefficients = beta;
  fit.standard_errors = fit.covariance.diagonal().cwiseSqrt();
  fit.wald_z = beta.cwiseQuotient(fit.standard_errors);
  fit.p_values.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) fit.p_values[j] = stats::normal_two_sided_p(fit.wald_z[j]);
  fit.log_likelihood = ll;
  fit.score_norm = (design.transpose() * (y - prob)).norm();
  return fit;
}

BiasReport conditional_bias_report(const Dataset& dataset, const Conditioning& conditioning,
                                   const std::string& group_attr, const std::string& target_label,
                                   const AuditOptions& options) {
  if (dataset.attribute(group_attr).levels.size() < 2) {
    throw MissingGroup("attribute '" + group_attr + "' needs at least two levels");
  }
  return build_report(dataset, conditioning, group_attr, target_label, options);
}

BiasReport multi_group_bias_report(const Dataset& dataset, const Conditioning& conditioning,
                                   const std::string& group_attr, const std::string& target_label,
                                   const AuditOptions& options) {
  if (dataset.attribute(group_attr).levels.size() < 3) {
    throw MissingGroup("attribute '" + group_attr + "' needs at least three levels");
  }
  return build_report(dataset, conditioning, group_attr, target_label, options);
}

std::vector<BiasCurve> bias_curves(const Dataset& dataset, const std::vector<std::string>& aus,
                                   const std::string& group_attr, const std::string& target_label,
                                   std::span<const double> grid) {
  std::vector<BiasCurve> curves;
  if (grid.empty()) return curves;
  const int target = dataset.target_class(target_label);
  const std::size_t attr = dataset.attribute_index(group_attr);
  const auto& levels = dataset.attributes()[attr].levels;
  std::vector<std::string> sorted = aus;
  sort_au_ids(sorted);
  for (const auto& au : sorted) {
    const std::size_t pos = dataset.au_index(au);
    for (std::size_t g = 0; g < levels.size(); ++g) {
      std::vector<double> x;
      std::vector<int> y;
      for (const auto& r : dataset.records()) {
        if (static_cast<std::size_t>(r.groups[attr]) != g) continue;
        x.push_back(r.au_intensities[pos]);
        y.push_back(r.label == target ? 1 : 0);
      }
      Eigen::MatrixXd design(static_cast<Eigen::Index>(x.size()), 2);
      for (std::size_t i = 0; i < x.size(); ++i) {
        design(static_cast<Eigen::Index>(i), 0) = 1.0;
        design(static_cast<Eigen::Index>(i), 1) = x[i];
      }
      const auto fit = logistic_fit(design, y);
      BiasCurve curve{au, levels[g], {grid.begin(), grid.end()}, {}, {}, {}};
      for (double v : grid) {
        const double eta = fit.coefficients[0] + fit.coefficients[1] * v;
        const double var = fit.covariance(0, 0) + 2.0 * v * fit.covariance(0, 1) +
                           v * v * fit.covariance(1, 1);
        const double half = 1.959963984540054 * std::sqrt(std::max(var, 0.0));
        curve.probability.push_back(sigmoid(eta));
        curve.lower.push_back(sigmoid(eta - half));
        curve.upper.push_back(sigmoid(eta + half));
      }
      curves.push_back(std::move(curve));
    }
  }
  return curves;
}

}  // namespace aucal::audit
