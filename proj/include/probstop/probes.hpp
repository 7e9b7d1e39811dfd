#pragma once

#include <cstdint>

#include "probstop/common.hpp"

namespace probstop {

/// Probe distributions for Monte Carlo estimators. Both have identity
/// second moment, E[w w^T] = I, with i.i.d. components.
enum class ProbeDistribution {
  Gaussian,   ///< standard normal components
  Rademacher, ///< components +1 or -1, each with probability 1/2
};

const char* to_string(ProbeDistribution dist);

/// Counter-based stream of probe vectors. Probe j is a pure function of
/// (master_seed, j, dimension), so any subset of probes can be generated
/// in any order, on any number of threads, with identical results.
///
/// Gaussian entries come from a Box-Muller transform of 53-bit uniforms
/// produced by a splitmix64 sequence keyed on (master_seed, j). The
/// algorithm is fixed so stored fixtures stay valid.
struct ProbeStream {
  ProbeDistribution distribution = ProbeDistribution::Rademacher;
  Index dimension = 0;
  std::uint64_t master_seed = 0;
};

/// 64-bit mix used to derive per-probe and per-phase seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Returns probe j of the stream. Throws std::invalid_argument if the
/// stream dimension is not positive.
Vector draw_probe(const ProbeStream& stream, std::uint64_t probe_index);

/// Max entrywise deviation of (1/n) sum_i w_i w_i^T from the identity.
/// Decays like n^{-1/2}; diagonal entries are exactly 1 for Rademacher.
double second_moment_check(ProbeDistribution dist, Index dimension,
                           long n_samples, std::uint64_t seed = 0);

} // namespace probstop
