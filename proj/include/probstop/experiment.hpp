#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "probstop/inversion.hpp"

namespace probstop {

/// Declarative configuration for the inversion experiment. Parsed from a
/// plain key = value file ('#' starts a comment); unknown keys and
/// malformed lines are reported with their line number.
struct InvertConfig {
  long grid = 16;         ///< cells per side
  long sources = 64;      ///< dipole source count
  double noise = 0.02;    ///< sigma as a fraction of the clean-data RMS
  double rho = 0.0;       ///< 0 = derive from noise (sigma^2 l s)
  std::uint64_t data_seed = 1;  ///< noise realization
  std::uint64_t seed = 0;       ///< algorithm master seed
  double eps_c = 0.05, delta_c = 0.3;
  double eps_u = 0.1, delta_u = 0.3;
  double eps_t = 0.1, delta_t = 0.1;
  long max_outer = 200;
  long inner_cg_limit = 10;
  long n0 = 1;
  std::string distribution = "rademacher"; ///< or "gaussian"
  std::string true_model = "blocks"; ///< two blocks in a uniform background

  static InvertConfig parse(std::istream& in);
  static InvertConfig parse_file(const std::string& path);

  ProbeDistribution probe_distribution() const;
};

/// Fully built twin experiment: true model, dipole sources, partial
/// boundary receivers, noisy data and the discrepancy target.
struct InvertSetup {
  Grid grid;
  ConductivityModel true_model;
  ConductivityModel initial_model; ///< homogeneous background
  SourceSet sources;
  ReceiverSet receivers;
  DataSet data;
  DiscrepancyTarget target;
  double sigma = 0.0;
  long clean_data_solves = 0; ///< spent synthesizing the data
};

/// Two rectangular inclusions (log-conductivity +-log(10)) in a zero
/// background.
ConductivityModel make_blocks_model(const Grid& grid);

/// Synthesizes the experiment a config describes. Data generation uses a
/// dedicated solver so the returned setup carries no live solve counts.
InvertSetup build_invert_setup(const InvertConfig& config);

ProbabilisticStopSpec stop_spec_from_config(const InvertConfig& config,
                                            const DiscrepancyTarget& target,
                                            Index s);

InverseOptions inverse_options_from_config(const InvertConfig& config);

} // namespace probstop
