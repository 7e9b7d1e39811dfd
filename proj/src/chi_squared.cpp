#include "probstop/chi_squared.hpp"

#include <cmath>
#include <limits>

namespace probstop {

namespace {

constexpr double kTiny = 1e-300;
constexpr double kRelTol = 1e-16;
constexpr long kMaxTerms = 1'000'000;

double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double denom = a;
  for (long i = 0; i < kMaxTerms; ++i) {
    denom += 1.0;
    term *= x / denom;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kRelTol)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw NumericalError("gamma_p: series did not converge");
}

// continued fraction for Q(a, x) = 1 - P(a, x), modified Lentz
double gamma_q_contfrac(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (long i = 1; i < kMaxTerms; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kRelTol)
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  }
  throw NumericalError("gamma_p: continued fraction did not converge");
}

void check_eps(double eps) {
  if (!(eps > 0.0) || !(eps < 1.0))
    throw std::invalid_argument("eps must lie in (0, 1)");
}

void check_eps_delta(double eps, double delta) {
  check_eps(eps);
  if (!(delta > 0.0) || !(delta < 1.0))
    throw std::invalid_argument("delta must lie in (0, 1)");
}

// Smallest n >= n_min satisfying cond, assuming cond holds from some point
// on. Doubles the offset to bracket, bisects, then walks the boundary down
// so that the returned n0 carries the certificate cond(n0) && !cond(n0-1)
// (the walk guards against non-monotone stretches inside the bracket).
template <typename Cond, typename Prob>
MinSampleResult find_min_n(long n_min, Cond cond, Prob prob) {
  long lo = n_min; // candidate region starts here
  if (cond(n_min)) {
    MinSampleResult res;
    res.n0 = n_min;
    res.prob_at_n0 = prob(n_min);
    res.prob_before = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  long offset = 1;
  while (!cond(n_min + offset)) {
    offset *= 2;
    if (offset > (1L << 40))
      throw NumericalError("minimal sample-size search failed to bracket");
  }
  lo = n_min + offset / 2; // cond false
  long hi = n_min + offset; // cond true
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (cond(mid))
      hi = mid;
    else
      lo = mid;
  }
  while (hi > n_min + 1 && cond(hi - 1)) --hi;
  MinSampleResult res;
  res.n0 = hi;
  res.prob_at_n0 = prob(hi);
  res.prob_before = prob(hi - 1);
  return res;
}

} // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw std::invalid_argument("gamma_p: a must be positive");
  if (x < 0.0) throw std::invalid_argument("gamma_p: x must be non-negative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_contfrac(a, x);
}

double chisq_cdf(long degree, double x) {
  if (degree < 1)
    throw std::invalid_argument("chisq_cdf: degree must be >= 1");
  if (x < 0.0) throw std::invalid_argument("chisq_cdf: x must be >= 0");
  return gamma_p(0.5 * static_cast<double>(degree), 0.5 * x);
}

double scaled_lower_prob(long n, double eps) {
  if (n < 1) throw std::invalid_argument("scaled_lower_prob: n must be >= 1");
  check_eps(eps);
  return chisq_cdf(n, static_cast<double>(n) * (1.0 - eps));
}

double scaled_upper_prob(long n, double eps) {
  if (n < 1) throw std::invalid_argument("scaled_upper_prob: n must be >= 1");
  check_eps(eps);
  return chisq_cdf(n, static_cast<double>(n) * (1.0 + eps));
}

MinSampleResult min_n_lower(double eps, double delta) {
  check_eps_delta(eps, delta);
  const auto prob = [eps](long n) { return scaled_lower_prob(n, eps); };
  const auto cond = [&](long n) { return prob(n) <= delta; };
  return find_min_n(1, cond, prob);
}

MinSampleUpperResult min_n_upper(double eps, double delta) {
  check_eps_delta(eps, delta);
  const auto prob = [eps](long n) { return scaled_upper_prob(n, eps); };
  const auto cond = [&](long n) { return prob(n) >= 1.0 - delta; };

  MinSampleUpperResult res;
  const long first_min = static_cast<long>(std::floor(1.0 / eps)) + 1;
  res.first = find_min_n(first_min, cond, prob);
  const long persist_min =
      static_cast<long>(std::floor(1.0 / (eps * eps))) + 1;
  res.persistent = find_min_n(persist_min, cond, prob);
  return res;
}

bool necessary_lower_holds(long n, long r, double eps, double delta) {
  if (n < 1 || r < 1)
    throw std::invalid_argument("necessary_lower_holds: n, r must be >= 1");
  check_eps_delta(eps, delta);
  return scaled_lower_prob(n * r, eps) <= delta;
}

NecessaryUpperResult necessary_upper_holds(long n, long r, double eps,
                                           double delta) {
  if (r < 1)
    throw std::invalid_argument("necessary_upper_holds: r must be >= 1");
  check_eps_delta(eps, delta);
  if (!(static_cast<double>(n) > 1.0 / eps))
    throw std::invalid_argument("necessary_upper_holds: requires n > 1/eps");
  NecessaryUpperResult res;
  res.holds = scaled_upper_prob(n * r, eps) >= 1.0 - delta;
  const double rr = static_cast<double>(r);
  res.persistent_regime = static_cast<double>(n) > 1.0 / (eps * eps * rr * rr);
  return res;
}

} // namespace probstop
