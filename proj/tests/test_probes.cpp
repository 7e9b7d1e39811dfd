#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "probstop/probes.hpp"

using namespace probstop;

TEST_CASE("rademacher probes take values in {+1, -1}") {
  const ProbeStream stream{ProbeDistribution::Rademacher, 4, 1234};
  for (std::uint64_t j = 0; j < 50; ++j) {
    const Vector w = draw_probe(stream, j);
    for (Index i = 0; i < 4; ++i)
      CHECK((w[i] == 1.0 || w[i] == -1.0));
    CHECK(w.squaredNorm() == 4.0);
  }
}

TEST_CASE("probes are pure functions of (seed, index, dimension)") {
  const ProbeStream stream{ProbeDistribution::Gaussian, 1, 77};
  const Vector a = draw_probe(stream, 5);
  const Vector b = draw_probe(stream, 5);
  CHECK(a[0] == b[0]);

  // drawing out of order changes nothing
  const ProbeStream big{ProbeDistribution::Gaussian, 9, 42};
  const Vector w2_first = draw_probe(big, 2);
  (void)draw_probe(big, 7);
  const Vector w2_again = draw_probe(big, 2);
  CHECK((w2_first - w2_again).norm() == 0.0);

  // distinct indices give distinct probes
  CHECK((draw_probe(big, 0) - draw_probe(big, 1)).norm() > 0.0);
  // distinct seeds give distinct probes
  const ProbeStream other{ProbeDistribution::Gaussian, 9, 43};
  CHECK((draw_probe(big, 0) - draw_probe(other, 0)).norm() > 0.0);
}

TEST_CASE("gaussian second moment converges to the identity") {
  // 1e5 samples at s = 8: entrywise deviation from I below 0.05
  CHECK(second_moment_check(ProbeDistribution::Gaussian, 8, 100000, 3) < 0.05);
}

TEST_CASE("second moment at a million samples") {
  CHECK(second_moment_check(ProbeDistribution::Gaussian, 2, 1000000, 5) < 0.01);
  // rademacher diagonal is exactly 1, so only off-diagonal deviates
  CHECK(second_moment_check(ProbeDistribution::Rademacher, 2, 1000000, 6) < 0.01);
}

TEST_CASE("rademacher diagonal second moment is exact") {
  const ProbeStream stream{ProbeDistribution::Rademacher, 3, 9};
  Matrix acc = Matrix::Zero(3, 3);
  for (std::uint64_t j = 0; j < 100; ++j) {
    const Vector w = draw_probe(stream, j);
    acc += w * w.transpose();
  }
  acc /= 100.0;
  for (Index i = 0; i < 3; ++i) CHECK(acc(i, i) == 1.0);
}

TEST_CASE("mean squared norm matches the dimension") {
  const Index s = 16;
  const long n = 20000;
  const ProbeStream stream{ProbeDistribution::Gaussian, s, 11};
  double mean = 0.0;
  for (long j = 0; j < n; ++j)
    mean += draw_probe(stream, static_cast<std::uint64_t>(j)).squaredNorm();
  mean /= static_cast<double>(n);
  // Var(||w||^2) = 2 s for standard normal entries
  const double se = std::sqrt(2.0 * static_cast<double>(s) / n);
  CHECK(std::abs(mean - static_cast<double>(s)) < 3.0 * se);
}

TEST_CASE("invalid arguments") {
  CHECK_THROWS_AS(draw_probe(ProbeStream{ProbeDistribution::Gaussian, 0, 1}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(second_moment_check(ProbeDistribution::Gaussian, 2, 0),
                  std::invalid_argument);
}
