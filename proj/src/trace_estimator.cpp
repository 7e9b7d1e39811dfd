#include "probstop/trace_estimator.hpp"

#include <cmath>
#include <vector>

#include "probstop/chi_squared.hpp"

namespace probstop {

ImplicitSpsd implicit_from_matrix(Matrix b) {
  ImplicitSpsd op;
  op.size = b.cols();
  op.apply_b = [mat = std::move(b)](const Vector& v) -> Vector {
    return mat * v;
  };
  return op;
}

ProbePlan plan_probes(double eps, double delta) {
  if (!(eps > 0.0) || !(eps < 1.0) || !(delta > 0.0) || !(delta < 1.0))
    throw std::invalid_argument("plan_probes: eps, delta must lie in (0, 1)");

  ProbePlan plan;
  plan.eps = eps;
  plan.delta = delta;
  plan.c = std::log(2.0 / delta) / (eps * eps);
  plan.n_sufficient_gaussian = static_cast<long>(std::ceil(8.0 * plan.c));
  plan.n_sufficient_rademacher = static_cast<long>(std::ceil(6.0 * plan.c));
  plan.n_chisq_sufficient_lower = min_n_lower(eps, delta).n0;
  plan.n_chisq_sufficient_upper = min_n_upper(eps, delta).first.n0;

  // Two-sided size: split the failure budget evenly and take the first n
  // (above the 1/eps admissibility floor for the upper condition) where
  // both halves hold. Verified directly rather than assumed monotone.
  const double half = 0.5 * delta;
  long n = std::max({min_n_lower(eps, half).n0,
                     min_n_upper(eps, half).first.n0,
                     static_cast<long>(std::floor(1.0 / eps)) + 1});
  while (!(scaled_lower_prob(n, eps) <= half &&
           scaled_upper_prob(n, eps) >= 1.0 - half))
    ++n;
  plan.n_chisq_two_sided = n;
  return plan;
}

TraceEstimate estimate_trace(const ImplicitSpsd& op, const ProbeStream& stream,
                             long n) {
  if (n < 1) throw std::invalid_argument("estimate_trace: n must be >= 1");
  if (op.size < 1 || !op.apply_b)
    throw std::invalid_argument("estimate_trace: operator is empty");
  if (stream.dimension != op.size)
    throw std::invalid_argument(
        "estimate_trace: probe dimension does not match operator size");

  // Terms are stored per probe index and reduced sequentially, so a future
  // parallel evaluation of apply_b cannot change the result.
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const Vector w = draw_probe(stream, static_cast<std::uint64_t>(i));
    terms[static_cast<std::size_t>(i)] = op.apply_b(w).squaredNorm();
  }
  double sum = 0.0;
  for (double t : terms) sum += t;

  TraceEstimate est;
  est.value = sum / static_cast<double>(n);
  est.n = n;
  est.distribution = stream.distribution;
  est.seed = stream.master_seed;
  return est;
}

TraceEstimate estimate_trace(const ImplicitSpsd& op, ProbeDistribution dist,
                             long n, std::uint64_t seed) {
  return estimate_trace(op, ProbeStream{dist, op.size, seed}, n);
}

double calibrate_failure_rate(const ImplicitSpsd& op, double exact_trace,
                              ProbeDistribution dist, long n, double eps,
                              long trials, std::uint64_t seed) {
  if (!(exact_trace > 0.0))
    throw std::invalid_argument(
        "calibrate_failure_rate: exact trace must be positive");
  if (trials < 1)
    throw std::invalid_argument("calibrate_failure_rate: trials must be >= 1");

  long failures = 0;
  for (long t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = mix_seed(seed, static_cast<std::uint64_t>(t));
    const TraceEstimate est = estimate_trace(op, dist, n, trial_seed);
    if (std::abs(est.value - exact_trace) > eps * exact_trace) ++failures;
  }
  return static_cast<double>(failures) / static_cast<double>(trials);
}

} // namespace probstop
