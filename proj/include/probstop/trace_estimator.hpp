#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "probstop/common.hpp"
#include "probstop/probes.hpp"

namespace probstop {

/// A symmetric positive semi-definite operator A = B^T B given implicitly
/// through products v -> B v. A itself is never formed; every quadratic
/// form (v, A v) is evaluated as ||B v||^2.
struct ImplicitSpsd {
  std::function<Vector(const Vector&)> apply_b;
  Index size = 0; ///< number of columns of B
  std::optional<Index> rank_hint;
};

/// Wraps an explicit rectangular matrix as an implicit B^T B operator.
ImplicitSpsd implicit_from_matrix(Matrix b);

/// Sample sizes guaranteeing |estimate - tr(A)| <= eps * tr(A) with
/// probability at least 1 - delta.
struct ProbePlan {
  double eps = 0.0;
  double delta = 0.0;
  double c = 0.0; ///< eps^{-2} ln(2/delta)
  long n_sufficient_gaussian = 0;   ///< ceil(8 c)
  long n_sufficient_rademacher = 0; ///< ceil(6 c)
  /// one-sided chi-squared sufficient sizes (Gaussian probes)
  long n_chisq_sufficient_lower = 0;
  long n_chisq_sufficient_upper = 0;
  /// two-sided chi-squared size: smallest admissible n where both
  /// one-sided conditions hold with budget delta/2 each
  long n_chisq_two_sided = 0;
};

ProbePlan plan_probes(double eps, double delta);

struct TraceEstimate {
  double value = 0.0;
  long n = 0;
  ProbeDistribution distribution = ProbeDistribution::Rademacher;
  std::uint64_t seed = 0;
};

/// Monte Carlo trace estimate (1/n) sum_i ||B w_i||^2 with probes from the
/// given stream. Per-probe terms are accumulated in probe-index order, so
/// the value is independent of evaluation order. The stream dimension must
/// match op.size.
TraceEstimate estimate_trace(const ImplicitSpsd& op, const ProbeStream& stream,
                             long n);

TraceEstimate estimate_trace(const ImplicitSpsd& op, ProbeDistribution dist,
                             long n, std::uint64_t seed);

/// Fraction of `trials` independent estimates violating the relative
/// criterion |estimate - exact_trace| <= eps * exact_trace.
double calibrate_failure_rate(const ImplicitSpsd& op, double exact_trace,
                              ProbeDistribution dist, long n, double eps,
                              long trials, std::uint64_t seed);

} // namespace probstop
