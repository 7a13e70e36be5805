#pragma once

#include <span>

namespace aucal::stats {

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
// The public entry points pick the series for x < a + 1 and the continued
// fraction otherwise; both routes are exposed for cross-checking.
double gamma_p(double a, double x);
double gamma_q(double a, double x);
double gamma_p_series(double a, double x);
// Legendre fraction for Q; only accurate for x >= a + 1.
double gamma_q_continued_fraction(double a, double x);
// P by continued fractions alone: the lower-gamma fraction below a + 1 and
// the complement of the Legendre fraction above.
double gamma_p_continued_fraction(double a, double x);

double chi_square_cdf(double x, double dof);
// Upper tail, 1 - CDF, computed without cancellation.
double chi_square_sf(double x, double dof);

double normal_cdf(double z);
// Two-sided tail probability 2 * (1 - Phi(|z|)).
double normal_two_sided_p(double z);

struct ThresholdFit {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Candidate thresholds for the predictor 1[value > t]: one below the
// minimum, midpoints of consecutive distinct values, one above the maximum.
// The extreme candidates sit half a unit outside the observed range.
inline constexpr double kOuterCandidateOffset = 0.5;

// Accuracy-maximizing threshold over the candidate grid; ties go to the
// smallest threshold. Inputs must be nonempty and of equal length.
ThresholdFit max_accuracy_threshold(std::span<const double> values, std::span<const int> truth);

// F1 of the positive class; 0 when there are no positives to find or claim.
double f1_score(long long true_pos, long long false_pos, long long false_neg);

}  // namespace aucal::stats
