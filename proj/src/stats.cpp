#include "aucal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "aucal/error.hpp"

namespace aucal::stats {
namespace {

constexpr int kMaxIterations = 100000;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;

// x^a e^-x / Gamma(a), evaluated in log space.
double gamma_prefactor(double a, double x) {
  return std::exp(-x + a * std::log(x) - std::lgamma(a));
}

void check_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw Error("incomplete gamma needs a > 0 and x >= 0");
}

}  // namespace

double gamma_p_series(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 0; n < kMaxIterations; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return std::min(1.0, sum * gamma_prefactor(a, x));
}

double gamma_q_continued_fraction(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  // Modified Lentz evaluation of the Legendre continued fraction.
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / (std::abs(b) < kTiny ? kTiny : b);
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::min(1.0, gamma_prefactor(a, x) * h);
}

double gamma_p_continued_fraction(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (x >= a + 1.0) return 1.0 - gamma_q_continued_fraction(a, x);
  // Lower-gamma fraction a - a x/(a+1 + x/(a+2 - (a+1) x/(a+3 + 2x/(a+4 - ...)))),
  // well conditioned below the switch point where the Legendre fraction is not.
  double f = a;
  double c = f;
  double d = 0.0;
  for (int n = 1; n < kMaxIterations; ++n) {
    const double k = n / 2;
    const double an = n % 2 ? -(a + k) * x : k * x;
    const double bn = a + n;
    d = bn + an * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = bn + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::min(1.0, gamma_prefactor(a, x) / f);
}

double gamma_p(double a, double x) {
  check_args(a, x);
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
  check_args(a, x);
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

double chi_square_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return gamma_p(dof / 2.0, x / 2.0);
}

double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return gamma_q(dof / 2.0, x / 2.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_two_sided_p(double z) {
  return std::min(1.0, std::erfc(std::abs(z) / std::numbers::sqrt2));
}

ThresholdFit max_accuracy_threshold(std::span<const double> values, std::span<const int> truth) {
  if (values.size() != truth.size()) throw LengthMismatch("values and truth differ in length");
  if (values.empty()) throw EmptyInput("no values to threshold");
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteValue("threshold search needs finite values");
  }
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // Start below the minimum: everything predicted positive.
  long long correct = 0;
  for (int t : truth) correct += t == 1 ? 1 : 0;
  long long best_correct = correct;
  double best_threshold = values[order.front()] - kOuterCandidateOffset;

  std::size_t i = 0;
  while (i < n) {
    const double v = values[order[i]];
    // Raising the threshold past v flips every record at v to negative.
    while (i < n && values[order[i]] == v) {
      correct += truth[order[i]] == 1 ? -1 : 1;
      ++i;
    }
    const double candidate =
        i < n ? v + (values[order[i]] - v) / 2.0 : v + kOuterCandidateOffset;
    if (correct > best_correct) {
      best_correct = correct;
      best_threshold = candidate;
    }
  }
  return {best_threshold, static_cast<double>(best_correct) / static_cast<double>(n)};
}

double f1_score(long long true_pos, long long false_pos, long long false_neg) {
  const long long denom = 2 * true_pos + false_pos + false_neg;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(true_pos) / static_cast<double>(denom);
}

}  // namespace aucal::stats
