#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "probstop/chi_squared.hpp"
#include "probstop/trace_estimator.hpp"

using namespace probstop;

namespace {

// random PSD via an explicit square factor with seeded gaussian entries
Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
  const ProbeStream stream{ProbeDistribution::Gaussian, rows, seed};
  Matrix b(rows, cols);
  for (Index j = 0; j < cols; ++j)
    b.col(j) = draw_probe(stream, static_cast<std::uint64_t>(j));
  return b;
}

} // namespace

TEST_CASE("identity trace is exact under rademacher probes") {
  const Index s = 7;
  const ImplicitSpsd op = implicit_from_matrix(Matrix::Identity(s, s));
  for (long n : {1L, 3L, 10L}) {
    const TraceEstimate est = estimate_trace(op, ProbeDistribution::Rademacher, n, 99);
    CHECK(est.value == doctest::Approx(7.0).epsilon(1e-14));
  }
}

TEST_CASE("zero matrix estimates to zero") {
  const ImplicitSpsd op = implicit_from_matrix(Matrix::Zero(3, 5));
  CHECK(estimate_trace(op, ProbeDistribution::Gaussian, 4, 1).value == 0.0);
  CHECK(estimate_trace(op, ProbeDistribution::Rademacher, 4, 1).value == 0.0);
}

TEST_CASE("unbiasedness for an explicit diagonal factor") {
  Matrix b = Matrix::Zero(3, 3);
  b.diagonal() << 1.0, 2.0, 3.0; // trace of b^T b = 14
  const ImplicitSpsd op = implicit_from_matrix(b);
  double mean = 0.0;
  const long trials = 10000;
  for (long t = 0; t < trials; ++t)
    mean += estimate_trace(op, ProbeDistribution::Gaussian, 16, mix_seed(5, t)).value;
  mean /= trials;
  // single-estimate std is sqrt(2 * (1+16+81) / 16) ~ 3.5, so 1% of the
  // trace is a 4-sigma band for the mean of 1e4 trials
  CHECK(std::abs(mean - 14.0) < 0.01 * 14.0);
}

TEST_CASE("unbiasedness within four standard errors on a random factor") {
  const ImplicitSpsd op = implicit_from_matrix(gaussian_matrix(12, 12, 31));
  double exact = 0.0;
  {
    const Matrix b = gaussian_matrix(12, 12, 31);
    exact = b.squaredNorm();
  }
  const long trials = 3000;
  std::vector<double> values(trials);
  double mean = 0.0;
  for (long t = 0; t < trials; ++t) {
    values[static_cast<std::size_t>(t)] =
        estimate_trace(op, ProbeDistribution::Gaussian, 2, mix_seed(77, t)).value;
    mean += values[static_cast<std::size_t>(t)];
  }
  mean /= trials;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= (trials - 1);
  CHECK(std::abs(mean - exact) <= 4.0 * std::sqrt(var / trials));
}

TEST_CASE("sample-size plan") {
  const ProbePlan plan = plan_probes(0.1, 0.05);
  CHECK(plan.c == doctest::Approx(368.8879454).epsilon(1e-8));
  CHECK(plan.n_sufficient_gaussian == 2952);
  CHECK(plan.n_sufficient_rademacher == 2214);
  CHECK(plan.n_chisq_sufficient_lower == 518);
  CHECK(plan.n_chisq_sufficient_upper == 564);
  CHECK(plan.n_chisq_two_sided == 806);

  const ProbePlan loose = plan_probes(0.5, 0.5);
  CHECK(loose.c == doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-12));
  CHECK(loose.n_sufficient_gaussian == 45);
  CHECK(loose.n_sufficient_rademacher == 34);

  CHECK_THROWS_AS(plan_probes(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(plan_probes(0.5, 1.0), std::invalid_argument);
}

TEST_CASE("chisq sufficient sizes beat the log-bound sizes") {
  for (double eps : {0.1, 0.3, 0.5})
    for (double delta : {0.05, 0.2, 0.5}) {
      const ProbePlan plan = plan_probes(eps, delta);
      CHECK(plan.n_chisq_sufficient_lower <= plan.n_sufficient_gaussian);
      CHECK(plan.n_chisq_sufficient_upper <= plan.n_sufficient_gaussian);
      CHECK(plan.n_chisq_two_sided <= plan.n_sufficient_gaussian);
    }
}

TEST_CASE("probe stream must match the operator size") {
  const ImplicitSpsd op = implicit_from_matrix(Matrix::Identity(4, 4));
  const ProbeStream wrong{ProbeDistribution::Gaussian, 5, 0};
  CHECK_THROWS_AS(estimate_trace(op, wrong, 3), std::invalid_argument);
  CHECK_THROWS_AS(estimate_trace(op, ProbeDistribution::Gaussian, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("calibration is exact for the identity") {
  const ImplicitSpsd op = implicit_from_matrix(Matrix::Identity(20, 20));
  CHECK(calibrate_failure_rate(op, 20.0, ProbeDistribution::Rademacher, 1, 0.01,
                               500, 3) == 0.0);
  CHECK_THROWS_AS(calibrate_failure_rate(op, 0.0, ProbeDistribution::Gaussian, 1,
                                         0.1, 10, 3),
                  std::invalid_argument);
}

TEST_CASE("rank-1 gaussian failure matches the two-sided chisq size") {
  // For a rank-1 operator under gaussian probes the scaled estimate is a
  // chi-squared mean, so the derived n is tight: calibrated failure stays
  // under delta at n0 and blows past it at n0 / 2.
  const double eps = 0.2, delta = 0.1;
  const long n0 = plan_probes(eps, delta).n_chisq_two_sided;
  CHECK(n0 == 146);

  Matrix row = gaussian_matrix(8, 1, 5).transpose(); // 1 x 8 factor
  const ImplicitSpsd op = implicit_from_matrix(row);
  const double exact = row.squaredNorm();

  const long trials = 3000;
  const double at_n0 =
      calibrate_failure_rate(op, exact, ProbeDistribution::Gaussian, n0, eps, trials, 8);
  const double sigma = std::sqrt(delta * (1.0 - delta) / trials);
  CHECK(at_n0 <= delta + 3.0 * sigma);

  const double at_half =
      calibrate_failure_rate(op, exact, ProbeDistribution::Gaussian, n0 / 2, eps, trials, 9);
  CHECK(at_half > delta);
}

TEST_CASE("log-bound sample sizes keep the failure rate under delta") {
  Matrix b = Matrix::Zero(10, 10);
  for (Index i = 0; i < 10; ++i) b(i, i) = std::sqrt(static_cast<double>(i + 1));
  const ImplicitSpsd op = implicit_from_matrix(b); // trace 55
  const ProbePlan plan = plan_probes(0.3, 0.2);
  const double rate = calibrate_failure_rate(op, 55.0, ProbeDistribution::Gaussian,
                                             plan.n_sufficient_gaussian, 0.3, 1000, 4);
  CHECK(rate <= 0.2);
}

TEST_CASE("gaussian single-probe law for equal nonzero eigenvalues") {
  // A has r = 4 unit eigenvalues: n * estimate / tr(A) is chi-squared with
  // n r degrees, scaled; check the first two moments.
  const Index s = 12, r = 4;
  Matrix b = Matrix::Zero(r, s);
  for (Index i = 0; i < r; ++i) b(i, i) = 1.0;
  const ImplicitSpsd op = implicit_from_matrix(b);
  const double exact = static_cast<double>(r);
  const long n = 6, trials = 20000;

  double mean = 0.0, m2 = 0.0;
  for (long t = 0; t < trials; ++t) {
    const double v = estimate_trace(op, ProbeDistribution::Gaussian, n, mix_seed(13, t)).value;
    mean += v;
    m2 += v * v;
  }
  mean /= trials;
  const double var = m2 / trials - mean * mean;
  const double theory_var = 2.0 * exact * exact / static_cast<double>(n * r);
  CHECK(std::abs(mean - exact) <= 3.0 * std::sqrt(theory_var / trials));
  CHECK(std::abs(var - theory_var) <= 0.1 * theory_var);
}
