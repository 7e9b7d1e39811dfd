#include "probstop/probes.hpp"

#include <cmath>
#include <numbers>

namespace probstop {

namespace {

// splitmix64 (Vigna); full-period 64-bit generator used both as the
// per-probe bit source and as the seed mixer.
struct SplitMix64 {
  std::uint64_t state;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53 bits
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1], safe as a log argument
  double uniform01_open_below() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }
};

} // namespace

const char* to_string(ProbeDistribution dist) {
  return dist == ProbeDistribution::Gaussian ? "gaussian" : "rademacher";
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vector draw_probe(const ProbeStream& stream, std::uint64_t probe_index) {
  if (stream.dimension < 1)
    throw std::invalid_argument("draw_probe: dimension must be positive");

  SplitMix64 gen{mix_seed(stream.master_seed, probe_index)};
  Vector w(stream.dimension);

  if (stream.distribution == ProbeDistribution::Rademacher) {
    for (Index i = 0; i < stream.dimension; ++i)
      w[i] = (gen.next() >> 63) ? 1.0 : -1.0;
    return w;
  }

  // Box-Muller pairs
  for (Index i = 0; i < stream.dimension; i += 2) {
    const double u1 = gen.uniform01_open_below();
    const double u2 = gen.uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    w[i] = radius * std::cos(angle);
    if (i + 1 < stream.dimension) w[i + 1] = radius * std::sin(angle);
  }
  return w;
}

double second_moment_check(ProbeDistribution dist, Index dimension,
                           long n_samples, std::uint64_t seed) {
  if (n_samples < 1)
    throw std::invalid_argument("second_moment_check: n_samples must be >= 1");

  const ProbeStream stream{dist, dimension, seed};
  Matrix acc = Matrix::Zero(dimension, dimension);
  for (long i = 0; i < n_samples; ++i) {
    const Vector w = draw_probe(stream, static_cast<std::uint64_t>(i));
    acc.selfadjointView<Eigen::Lower>().rankUpdate(w);
  }
  acc = acc.selfadjointView<Eigen::Lower>();
  acc /= static_cast<double>(n_samples);
  acc -= Matrix::Identity(dimension, dimension);
  return acc.cwiseAbs().maxCoeff();
}

} // namespace probstop
