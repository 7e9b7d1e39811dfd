// Command-line front end: randomized trace estimation, the Poisson solver
// benchmark, the adaptive-integrator invariant study and the stochastic
// inversion experiment. Every command takes --seed and writes seed-echoed,
// timestamp-free output so identical invocations produce identical bytes.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical
// failure, 4 non-convergence (report still written).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "probstop/chi_squared.hpp"
#include "probstop/experiment.hpp"
#include "probstop/inversion.hpp"
#include "probstop/krylov.hpp"
#include "probstop/ode.hpp"
#include "probstop/trace_estimator.hpp"

namespace {

using namespace probstop;
using nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNoConvergence = 4;

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

// stdout unless a path is given
class OutputFile {
public:
  explicit OutputFile(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::invalid_argument("cannot open output file " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
  std::ofstream file_;
};

ProbeDistribution parse_distribution(const std::string& name) {
  if (name == "gaussian") return ProbeDistribution::Gaussian;
  if (name == "rademacher") return ProbeDistribution::Rademacher;
  throw CLI::ValidationError("--dist", "must be gaussian or rademacher");
}

struct TraceFamily {
  ImplicitSpsd op;
  double exact = 0.0;
};

TraceFamily make_family(const std::string& name, Index s, std::uint64_t seed) {
  TraceFamily fam;
  if (name == "identity") {
    fam.op = implicit_from_matrix(Matrix::Identity(s, s));
    fam.exact = static_cast<double>(s);
  } else if (name == "diag") {
    Matrix b = Matrix::Zero(s, s);
    for (Index i = 0; i < s; ++i) b(i, i) = std::sqrt(static_cast<double>(i + 1));
    fam.op = implicit_from_matrix(b);
    fam.exact = static_cast<double>(s) * static_cast<double>(s + 1) / 2.0;
  } else if (name == "rank1") {
    const ProbeStream stream{ProbeDistribution::Gaussian, s, mix_seed(seed, 0xF1)};
    Matrix b = draw_probe(stream, 0).transpose();
    fam.exact = b.squaredNorm();
    fam.op = implicit_from_matrix(std::move(b));
  } else if (name == "random-psd") {
    const ProbeStream stream{ProbeDistribution::Gaussian, s, mix_seed(seed, 0xF2)};
    Matrix b(s, s);
    for (Index j = 0; j < s; ++j) b.col(j) = draw_probe(stream, static_cast<std::uint64_t>(j));
    fam.exact = b.squaredNorm();
    fam.op = implicit_from_matrix(std::move(b));
  } else {
    throw CLI::ValidationError("--family",
                               "must be identity, diag, rank1 or random-psd");
  }
  return fam;
}

// ---------------------------------------------------------------- trace --

int cmd_trace(const std::string& family, long s, const std::string& dist_name,
              long n, std::uint64_t seed, bool plan_mode, bool calibrate_mode,
              double eps, double delta, long trials, const std::string& out) {
  OutputFile output(out);
  std::ostream& os = output.stream();

  if (plan_mode) {
    const ProbePlan plan = plan_probes(eps, delta);
    os << "# probe plan\n";
    os << "eps = " << format_double(plan.eps) << "\n";
    os << "delta = " << format_double(plan.delta) << "\n";
    os << "c = " << format_double(plan.c) << "\n";
    os << "n_gaussian = " << plan.n_sufficient_gaussian << "\n";
    os << "n_rademacher = " << plan.n_sufficient_rademacher << "\n";
    os << "n_chisq_lower = " << plan.n_chisq_sufficient_lower << "\n";
    os << "n_chisq_upper = " << plan.n_chisq_sufficient_upper << "\n";
    os << "n_chisq_two_sided = " << plan.n_chisq_two_sided << "\n";
    return 0;
  }

  const ProbeDistribution dist = parse_distribution(dist_name);

  if (calibrate_mode) {
    os << "# seed = " << seed << "\n";
    os << "family,s,dist,n,eps,delta,trials,failure_rate\n";
    const std::vector<std::string> families =
        family == "all" ? std::vector<std::string>{"identity", "diag", "rank1", "random-psd"}
                        : std::vector<std::string>{family};
    for (const std::string& name : families) {
      const TraceFamily fam = make_family(name, s, seed);
      const long n_used =
          n > 0 ? n
                : (dist == ProbeDistribution::Gaussian
                       ? plan_probes(eps, delta).n_sufficient_gaussian
                       : plan_probes(eps, delta).n_sufficient_rademacher);
      const double rate = calibrate_failure_rate(fam.op, fam.exact, dist, n_used,
                                                 eps, trials, seed);
      os << name << "," << s << "," << dist_name << "," << n_used << ","
         << format_double(eps) << "," << format_double(delta) << "," << trials
         << "," << format_double(rate) << "\n";
    }
    return 0;
  }

  const TraceFamily fam = make_family(family, s, seed);
  const TraceEstimate est = estimate_trace(fam.op, dist, n, seed);
  const double rel_err = fam.exact != 0.0
                             ? std::abs(est.value - fam.exact) / fam.exact
                             : std::abs(est.value);
  os << "# seed = " << seed << "\n";
  os << "family,s,dist,n,estimate,exact,rel_err\n";
  os << family << "," << s << "," << dist_name << "," << n << ","
     << format_double(est.value) << "," << format_double(fam.exact) << ","
     << format_double(rel_err) << "\n";
  return 0;
}

// -------------------------------------------------------- poisson-bench --

int cmd_poisson_bench(std::vector<long> sizes, double rho, long max_iter,
                      std::uint64_t seed, const std::string& history_dir,
                      const std::string& out) {
  for (long s : sizes) {
    const long side = static_cast<long>(std::llround(std::sqrt(static_cast<double>(s))));
    if (side * side != s)
      throw CLI::ValidationError("--sizes", std::to_string(s) + " is not a perfect square");
  }
  OutputFile output(out);
  std::ostream& os = output.stream();
  os << "# rho = " << format_double(rho) << "\n";
  os << "# seed = " << seed << "\n"; // echoed; the benchmark is deterministic
  os << "s,method,iterations,final_relres\n";
  for (long s : sizes) {
    for (IterativeMethod method :
         {IterativeMethod::MR, IterativeMethod::CG, IterativeMethod::SD,
          IterativeMethod::LSD}) {
      const SolveResult res = run_poisson_solver(s, method, rho, max_iter);
      os << s << "," << to_string(method) << "," << res.trace.iterations << ","
         << format_double(res.trace.final_relative_residual()) << "\n";
      if (!history_dir.empty()) {
        std::filesystem::create_directories(history_dir);
        std::ofstream hist(history_dir + "/history_" +
                           std::string(to_string(method)) + "_" +
                           std::to_string(s) + ".csv");
        hist << "k,relres";
        const bool has_steps = !res.trace.step_history.empty();
        if (has_steps) hist << ",alpha";
        hist << "\n";
        const double r0 = res.trace.residual_history.front();
        for (std::size_t k = 0; k < res.trace.residual_history.size(); ++k) {
          hist << k << "," << format_double(res.trace.residual_history[k] / r0);
          if (has_steps)
            hist << ","
                 << (k > 0 ? format_double(res.trace.step_history[k - 1]) : "");
          hist << "\n";
        }
      }
    }
  }
  return 0;
}

// -------------------------------------------------------- ode-adiabatic --

int cmd_ode_adiabatic(double lambda, double atol, double rtol,
                      std::uint64_t seed, const std::string& out) {
  MeshSolution mesh;
  const double drift = adiabatic_drift(lambda, ToleranceSpec{atol, rtol}, &mesh);
  OutputFile output(out);
  std::ostream& os = output.stream();
  os << "# lambda = " << format_double(lambda) << "\n";
  os << "# atol = " << format_double(atol) << ", rtol = " << format_double(rtol)
     << "\n";
  os << "# seed = " << seed << "\n"; // echoed; the integration is deterministic
  os << "# accepted = " << mesh.accepted << ", rejected = " << mesh.rejected
     << "\n";
  os << "t,q,p,J\n";
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    const Vector& u = mesh.values[i];
    os << format_double(mesh.nodes[i]) << "," << format_double(u[0]) << ","
       << format_double(u[1]) << ","
       << format_double(
              OscillatorStudy::invariant(u[0], u[1], mesh.nodes[i], lambda))
       << "\n";
  }
  os << "# drift = " << format_double(drift) << "\n";
  std::cout << "drift = " << format_double(drift) << "\n";
  return 0;
}

// ---------------------------------------------------------------- invert --

json record_to_json(const IterationRecord& rec) {
  json j;
  j["k"] = rec.k;
  j["n_k"] = rec.n_k;
  j["step_ok"] = rec.step_ok;
  j["phi_fit_start"] = rec.phi_fit_start;
  j["phi_fit_end"] = rec.phi_fit_end;
  j["gradient_norm"] = rec.gradient_norm;
  j["escalated"] = rec.escalated;
  if (rec.cv_pass) {
    j["cv"] = {{"new", *rec.cv_new}, {"old", *rec.cv_old}, {"pass", *rec.cv_pass}};
  }
  if (rec.uncertainty_pass) {
    j["uncertainty"] = {{"value", *rec.uncertainty_value},
                        {"pass", *rec.uncertainty_pass}};
  }
  if (rec.termination_soft) {
    j["termination"] = {{"value", *rec.termination_value},
                        {"hard", *rec.termination_hard},
                        {"soft", *rec.termination_soft}};
  }
  j["solves"] = {{"fit", rec.solves_fit},
                 {"cv", rec.solves_cv},
                 {"uncertainty", rec.solves_uncertainty},
                 {"termination", rec.solves_termination},
                 {"cumulative", rec.solves_cumulative}};
  return j;
}

void write_model_csv(const std::string& path, const ConductivityModel& model,
                     std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open " + path);
  out << "# log-conductivity grid, " << model.grid.nx << " x " << model.grid.nx
      << "\n";
  out << "# seed = " << seed << "\n";
  for (long j = 0; j < model.grid.nx; ++j) {
    for (long i = 0; i < model.grid.nx; ++i) {
      if (i) out << ",";
      out << format_double(model.log_mu[model.grid.index(i, j)]);
    }
    out << "\n";
  }
}

void write_data_csv(const std::string& path, const Matrix& data,
                    std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open " + path);
  out << "# observed data, receivers x sources\n";
  out << "# seed = " << seed << "\n";
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.cols(); ++j) {
      if (j) out << ",";
      out << format_double(data(i, j));
    }
    out << "\n";
  }
}

int cmd_invert(const std::string& config_path, const std::string& out_dir,
               bool vanilla, std::optional<std::uint64_t> seed_override) {
  InvertConfig cfg = InvertConfig::parse_file(config_path);
  if (seed_override) cfg.seed = *seed_override;

  const InvertSetup setup = build_invert_setup(cfg);
  ForwardSolver solver(setup.grid);
  const InversionProblem problem{&solver, &setup.sources, &setup.receivers,
                                 &setup.data};
  const ProbabilisticStopSpec spec =
      stop_spec_from_config(cfg, setup.target, setup.sources.count());
  InverseOptions opts = inverse_options_from_config(cfg);
  opts.vanilla = vanilla;

  const InverseReport report = invert(problem, setup.initial_model, spec, opts);
  const double phi_exact = misfit(solver, report.model_final, setup.data,
                                  setup.sources, setup.receivers);

  json j;
  j["config"] = {{"grid", cfg.grid},
                 {"sources", cfg.sources},
                 {"noise", cfg.noise},
                 {"data_seed", cfg.data_seed},
                 {"seed", cfg.seed},
                 {"distribution", cfg.distribution},
                 {"inner_cg_limit", cfg.inner_cg_limit},
                 {"max_outer", cfg.max_outer},
                 {"n0", cfg.n0},
                 {"vanilla", vanilla}};
  j["rho"] = spec.target.rho;
  j["sigma"] = setup.sigma;
  j["receivers"] = setup.receivers.count();
  j["plan"] = {{"n_c", spec.n_c},
               {"n_c_deterministic", spec.n_c_exact},
               {"n_u", spec.n_u},
               {"n_u_deterministic", spec.n_u_exact},
               {"n_t", spec.n_t},
               {"n_t_deterministic", spec.n_t_exact}};
  j["converged"] = report.converged;
  j["iterations"] = report.iterations;
  j["n_k_final"] = report.n_k_final;
  j["solve_count"] = report.solve_count;
  j["vanilla_equivalent_solves"] = report.vanilla_equivalent_solves;
  j["phi_hat_final"] = report.phi_hat_final;
  j["phi_exact_final"] = phi_exact;
  j["history"] = json::array();
  for (const IterationRecord& rec : report.history)
    j["history"].push_back(record_to_json(rec));

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream report_file(out_dir + "/report.json");
    if (!report_file)
      throw std::invalid_argument("cannot open " + out_dir + "/report.json");
    report_file << j.dump(2) << "\n";
  }
  write_model_csv(out_dir + "/model.csv", report.model_final, cfg.seed);
  write_model_csv(out_dir + "/true_model.csv", setup.true_model, cfg.seed);
  write_data_csv(out_dir + "/data.csv", setup.data.d, cfg.data_seed);

  std::cout << "converged = " << (report.converged ? "yes" : "no") << "\n";
  std::cout << "iterations = " << report.iterations << "\n";
  std::cout << "solve_count = " << report.solve_count << "\n";
  std::cout << "vanilla_equivalent_solves = " << report.vanilla_equivalent_solves
            << "\n";
  std::cout << "phi_hat_final = " << format_double(report.phi_hat_final)
            << ", rho = " << format_double(spec.target.rho) << "\n";
  return report.converged ? 0 : kExitNoConvergence;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"matrix-free estimators and solvers with probabilistic stopping"};
  app.require_subcommand(1);

  // trace ------------------------------------------------------------------
  auto* trace = app.add_subcommand("trace", "randomized trace estimation");
  std::string family = "identity", dist_name = "rademacher", trace_out;
  long s = 100, n = 10, trials = 1000;
  std::uint64_t trace_seed = 0;
  bool plan_mode = false, calibrate_mode = false;
  double eps = 0.1, delta = 0.05;
  trace->add_option("--family", family, "identity, diag, rank1, random-psd or all");
  trace->add_option("--s", s, "matrix size")->check(CLI::PositiveNumber);
  trace->add_option("--dist", dist_name, "gaussian or rademacher");
  trace->add_option("--n", n, "sample count (calibrate: 0 = from plan)");
  trace->add_option("--seed", trace_seed, "master seed");
  trace->add_flag("--plan", plan_mode, "print sufficient sample sizes for (eps, delta)");
  trace->add_flag("--calibrate", calibrate_mode, "empirical failure-rate table");
  trace->add_option("--eps", eps, "relative accuracy");
  trace->add_option("--delta", delta, "failure probability");
  trace->add_option("--trials", trials, "calibration trials")->check(CLI::PositiveNumber);
  trace->add_option("--out", trace_out, "output file (default stdout)");

  // poisson-bench ----------------------------------------------------------
  auto* bench = app.add_subcommand("poisson-bench", "iteration counts on the model problem");
  std::vector<long> sizes{49, 225, 961, 3969, 16129};
  double rho = 1e-7;
  long max_iter = 0;
  std::uint64_t bench_seed = 0;
  std::string history_dir, bench_out;
  bench->add_option("--sizes", sizes, "matrix sizes (perfect squares)")->delimiter(',');
  bench->add_option("--rho", rho, "relative residual tolerance")->check(CLI::PositiveNumber);
  bench->add_option("--max-iter", max_iter, "iteration cap (0 = automatic)");
  bench->add_option("--seed", bench_seed, "echoed into the output header");
  bench->add_option("--history", history_dir, "directory for per-iteration histories");
  bench->add_option("--out", bench_out, "output file (default stdout)");

  // ode-adiabatic ----------------------------------------------------------
  auto* ode = app.add_subcommand("ode-adiabatic", "oscillator invariant drift study");
  double lambda = 1000.0, atol = 1e-6, rtol = 1e-3;
  std::uint64_t ode_seed = 0;
  std::string ode_out;
  ode->add_option("--lambda", lambda, "frequency parameter")->check(CLI::PositiveNumber);
  ode->add_option("--atol", atol, "absolute tolerance")->check(CLI::PositiveNumber);
  ode->add_option("--rtol", rtol, "relative tolerance")->check(CLI::PositiveNumber);
  ode->add_option("--seed", ode_seed, "echoed into the output header");
  ode->add_option("--out", ode_out, "output file (default stdout)");

  // invert -----------------------------------------------------------------
  auto* invert_cmd = app.add_subcommand("invert", "stochastic conductivity inversion");
  std::string config_path, out_dir = "invert-out";
  bool vanilla = false;
  std::optional<std::uint64_t> seed_override;
  invert_cmd->add_option("--config", config_path, "experiment config file")->required();
  invert_cmd->add_option("--out", out_dir, "output directory");
  invert_cmd->add_flag("--vanilla", vanilla, "use all sources in every phase");
  std::uint64_t seed_value = 0;
  auto* seed_opt = invert_cmd->add_option("--seed", seed_value, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return err.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (*trace)
      return cmd_trace(family, s, dist_name, n, trace_seed, plan_mode,
                       calibrate_mode, eps, delta, trials, trace_out);
    if (*bench)
      return cmd_poisson_bench(sizes, rho, max_iter, bench_seed, history_dir,
                               bench_out);
    if (*ode) return cmd_ode_adiabatic(lambda, atol, rtol, ode_seed, ode_out);
    if (*invert_cmd) {
      if (*seed_opt) seed_override = seed_value;
      return cmd_invert(config_path, out_dir, vanilla, seed_override);
    }
  } catch (const CLI::ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
