#pragma once

#include "probstop/common.hpp"

namespace probstop {

/// Regularized lower incomplete gamma function P(a, x), a > 0, x >= 0.
/// Series expansion for x < a + 1, modified-Lentz continued fraction
/// otherwise; absolute error below 1e-12 over the ranges used here.
double gamma_p(double a, double x);

/// Pr(chi^2_degree <= x). Monotone non-decreasing in x.
double chisq_cdf(long degree, double x);

/// Pr(Q(n) < 1 - eps) for Q(n) = chi^2_n / n. Strictly decreasing in eps.
double scaled_lower_prob(long n, double eps);

/// Pr(Q(n) <= 1 + eps).
double scaled_upper_prob(long n, double eps);

/// Result of a minimal-sample-size search, with the boundary certificate:
/// the condition holds at n0 and fails at n0 - 1 (prob_before is NaN when
/// n0 is the smallest admissible value).
struct MinSampleResult {
  long n0 = 0;
  double prob_at_n0 = 0.0;
  double prob_before = 0.0;
};

/// Smallest n0 >= 1 with Pr(Q(n0) < 1 - eps) <= delta. The condition then
/// holds for every n >= n0.
MinSampleResult min_n_lower(double eps, double delta);

/// Sample sizes for the one-sided upper condition
/// Pr(Q(n) <= 1 + eps) >= 1 - delta.
struct MinSampleUpperResult {
  /// smallest n > 1/eps satisfying the condition (the condition is only a
  /// valid sufficient bound for n in that range)
  MinSampleResult first;
  /// smallest n > 1/eps^2 satisfying it; beyond this threshold the
  /// condition persists for all larger n
  MinSampleResult persistent;
};

MinSampleUpperResult min_n_upper(double eps, double delta);

/// Necessary condition for the lower bound to hold at sample size n for a
/// rank-r matrix: Pr(Q(n r) < 1 - eps) <= delta.
bool necessary_lower_holds(long n, long r, double eps, double delta);

struct NecessaryUpperResult {
  bool holds = false;
  /// n > 1/(eps^2 r^2): the regime where the condition, once true,
  /// persists for all larger n
  bool persistent_regime = false;
};

/// Necessary condition for the upper bound at sample size n, rank r:
/// Pr(Q(n r) <= 1 + eps) >= 1 - delta. Requires n > 1/eps.
NecessaryUpperResult necessary_upper_holds(long n, long r, double eps,
                                           double delta);

} // namespace probstop
