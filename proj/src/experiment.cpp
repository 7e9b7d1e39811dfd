#include "probstop/experiment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace probstop {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void parse_fail(long line, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " +
                              what);
}

template <typename T>
T parse_number(const std::string& value, long line) {
  std::istringstream in(value);
  T out;
  in >> out;
  if (in.fail() || !(in >> std::ws).eof())
    parse_fail(line, "cannot parse value '" + value + "'");
  return out;
}

} // namespace

InvertConfig InvertConfig::parse(std::istream& in) {
  InvertConfig cfg;
  std::string raw;
  long line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) parse_fail(line, "expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty() || value.empty()) parse_fail(line, "expected key = value");

    if (key == "grid") cfg.grid = parse_number<long>(value, line);
    else if (key == "sources") cfg.sources = parse_number<long>(value, line);
    else if (key == "noise") cfg.noise = parse_number<double>(value, line);
    else if (key == "rho") cfg.rho = parse_number<double>(value, line);
    else if (key == "data_seed") cfg.data_seed = parse_number<std::uint64_t>(value, line);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(value, line);
    else if (key == "eps_c") cfg.eps_c = parse_number<double>(value, line);
    else if (key == "delta_c") cfg.delta_c = parse_number<double>(value, line);
    else if (key == "eps_u") cfg.eps_u = parse_number<double>(value, line);
    else if (key == "delta_u") cfg.delta_u = parse_number<double>(value, line);
    else if (key == "eps_t") cfg.eps_t = parse_number<double>(value, line);
    else if (key == "delta_t") cfg.delta_t = parse_number<double>(value, line);
    else if (key == "max_outer") cfg.max_outer = parse_number<long>(value, line);
    else if (key == "inner_cg_limit") cfg.inner_cg_limit = parse_number<long>(value, line);
    else if (key == "n0") cfg.n0 = parse_number<long>(value, line);
    else if (key == "distribution") cfg.distribution = value;
    else if (key == "true_model") cfg.true_model = value;
    else parse_fail(line, "unknown key '" + key + "'");
  }
  if (cfg.grid < 4) throw std::invalid_argument("config: grid must be >= 4");
  if (cfg.sources < 1) throw std::invalid_argument("config: sources must be >= 1");
  if (cfg.distribution != "rademacher" && cfg.distribution != "gaussian")
    throw std::invalid_argument("config: distribution must be rademacher or gaussian");
  if (cfg.true_model != "blocks")
    throw std::invalid_argument("config: unknown true_model '" + cfg.true_model + "'");
  return cfg;
}

InvertConfig InvertConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  return parse(in);
}

ProbeDistribution InvertConfig::probe_distribution() const {
  return distribution == "gaussian" ? ProbeDistribution::Gaussian
                                    : ProbeDistribution::Rademacher;
}

ConductivityModel make_blocks_model(const Grid& grid) {
  ConductivityModel model{grid, Vector::Zero(grid.cells())};
  const double hi = std::log(10.0);
  const double lo = -std::log(10.0);
  for (long j = 0; j < grid.nx; ++j) {
    for (long i = 0; i < grid.nx; ++i) {
      const double x = grid.center_x(i);
      const double y = grid.center_y(j);
      if (x > 0.15 && x < 0.45 && y > 0.5 && y < 0.8)
        model.log_mu[grid.index(i, j)] = hi;
      else if (x > 0.55 && x < 0.85 && y > 0.15 && y < 0.5)
        model.log_mu[grid.index(i, j)] = lo;
    }
  }
  return model;
}

InvertSetup build_invert_setup(const InvertConfig& config) {
  InvertSetup setup;
  setup.grid = Grid{config.grid};
  setup.true_model = make_blocks_model(setup.grid);
  setup.initial_model =
      ConductivityModel{setup.grid, Vector::Zero(setup.grid.cells())};
  setup.sources = make_boundary_dipole_sources(setup.grid, config.sources);
  setup.receivers = make_partial_boundary_receivers(setup.grid);

  ForwardSolver synth(setup.grid);
  const Matrix clean =
      predict(synth, setup.true_model, setup.sources, setup.receivers);
  setup.clean_data_solves = synth.solve_count();

  const double rms =
      std::sqrt(clean.squaredNorm() / static_cast<double>(clean.size()));
  setup.sigma = config.noise * rms;
  if (!(setup.sigma > 0.0))
    throw std::invalid_argument("experiment: noise level must be positive");
  setup.data = make_noisy_data(clean, setup.sigma, config.data_seed);
  setup.target = DiscrepancyTarget::from_noise(setup.sigma, clean.rows(),
                                               clean.cols());
  if (config.rho > 0.0) setup.target.rho = config.rho;
  return setup;
}

ProbabilisticStopSpec stop_spec_from_config(const InvertConfig& config,
                                            const DiscrepancyTarget& target,
                                            Index s) {
  return make_stop_spec(target, QuantifierPair{config.eps_c, config.delta_c},
                        QuantifierPair{config.eps_u, config.delta_u},
                        QuantifierPair{config.eps_t, config.delta_t}, s);
}

InverseOptions inverse_options_from_config(const InvertConfig& config) {
  InverseOptions opts;
  opts.max_outer = config.max_outer;
  opts.asgn.inner_cg_limit = config.inner_cg_limit;
  opts.distribution = config.probe_distribution();
  opts.master_seed = config.seed;
  opts.n0 = config.n0;
  return opts;
}

} // namespace probstop
