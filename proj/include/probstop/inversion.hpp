#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "probstop/common.hpp"
#include "probstop/conductivity.hpp"
#include "probstop/probes.hpp"

namespace probstop {

struct QuantifierPair {
  double eps = 0.1;
  double delta = 0.1;
};

/// Sample sizes for the cross-validation, uncertainty and termination
/// phases, derived from the chi-squared minimal-sample searches and capped
/// at the number of sources s. A capped phase evaluates the misfit exactly
/// (deterministic weights), so its test carries no probabilistic qualifier.
struct ProbabilisticStopSpec {
  DiscrepancyTarget target;
  QuantifierPair cross_validation{0.05, 0.3};
  QuantifierPair uncertainty{0.1, 0.3};
  QuantifierPair termination{0.1, 0.1};
  long n_c = 0;
  long n_u = 0;
  long n_t = 0;
  bool n_c_exact = false;
  bool n_u_exact = false;
  bool n_t_exact = false;
};

ProbabilisticStopSpec make_stop_spec(const DiscrepancyTarget& target,
                                     QuantifierPair cross_validation,
                                     QuantifierPair uncertainty,
                                     QuantifierPair termination, Index s);

/// Sufficient termination test: phi_hat <= (1 - eps) rho. When it passes
/// at a conforming sample size, the exact misfit meets rho with
/// probability at least 1 - delta.
bool stop_test_hard(double phi_hat, double rho, double eps);

/// Necessary termination test: phi_hat <= (1 + eps) rho. When it fails at
/// a conforming sample size, the exact misfit exceeds rho with probability
/// at least 1 - delta.
bool stop_test_soft(double phi_hat, double rho, double eps);

/// Sample-size sanity check between two independent estimates:
/// (1 - eps) phi_new <= (1 + eps) phi_old. Failure signals that the
/// fitting sample size is too small and must be escalated.
bool cross_validation_test(double phi_new, double phi_old, double eps);

/// Cheap gate before the termination test: phi_hat <= (1 - eps) rho.
/// eps = 0 degenerates to the plain deterministic check.
bool uncertainty_check(double phi_hat, double rho, double eps);

/// Everything a misfit evaluation needs; non-owning.
struct InversionProblem {
  const ForwardSolver* solver = nullptr;
  const SourceSet* sources = nullptr;
  const ReceiverSet* receivers = nullptr;
  const DataSet* data = nullptr;

  Index source_count() const { return sources->count(); }
};

/// s x n matrix whose columns are probe vectors.
Matrix probe_weights(Index s, long n, ProbeDistribution dist,
                     std::uint64_t seed);

/// sqrt(s) * I: with these weights the sampled misfit equals the full
/// misfit exactly.
Matrix exact_weights(Index s);

/// (1/n) sum_j || F(m) w_j - D w_j ||^2 evaluated with one PDE solve per
/// column of `weights` (sources combined per probe).
double sampled_misfit(const InversionProblem& problem,
                      const ConductivityModel& model, const Matrix& weights);

/// Gradient of sampled_misfit in the log-conductivity, via one adjoint
/// solve per weight column.
Vector sampled_misfit_gradient(const InversionProblem& problem,
                               const ConductivityModel& model,
                               const Matrix& weights);

struct AsgnOptions {
  long inner_cg_limit = 10; ///< truncated CG steps; the implicit regularizer
  long max_backtracks = 15;
  double armijo_slope = 1e-4;
};

struct AsgnResult {
  ConductivityModel model;    ///< accepted iterate (input model when !ok)
  double phi_start = 0.0;     ///< sampled misfit before the step
  double phi_end = 0.0;       ///< sampled misfit after the step (same probes)
  double gradient_norm = 0.0;
  double step_length = 0.0;   ///< line-search multiplier actually taken
  long backtracks = 0;
  bool ok = false;            ///< false when the line search failed
};

/// One Gauss-Newton step on the sampled misfit: gradient by adjoints,
/// direction from the normal equations by truncated CG, Armijo
/// backtracking on the same probe set.
AsgnResult asgn_step(const InversionProblem& problem,
                     const ConductivityModel& model, const Matrix& weights,
                     const AsgnOptions& options);

struct InverseOptions {
  long max_outer = 200;
  AsgnOptions asgn;
  ProbeDistribution distribution = ProbeDistribution::Rademacher;
  std::uint64_t master_seed = 0;
  long n0 = 1;               ///< initial fitting sample size
  long escalation_factor = 2;
  bool vanilla = false;      ///< all s sources in every phase, all tests exact
};

struct IterationRecord {
  long k = 0;
  long n_k = 0;
  bool step_ok = false;
  double phi_fit_start = 0.0;
  double phi_fit_end = 0.0;
  double gradient_norm = 0.0;
  std::optional<double> cv_new, cv_old;
  std::optional<bool> cv_pass;
  std::optional<double> uncertainty_value;
  std::optional<bool> uncertainty_pass;
  std::optional<double> termination_value;
  std::optional<bool> termination_hard, termination_soft;
  bool escalated = false;
  long solves_fit = 0, solves_cv = 0, solves_uncertainty = 0,
       solves_termination = 0;
  long solves_cumulative = 0;
};

struct InverseReport {
  bool converged = false;
  long iterations = 0;
  ConductivityModel model_final;
  double phi_hat_final = 0.0; ///< last termination-phase estimate
  long n_k_final = 0;
  long solve_count = 0;
  /// cost the same trajectory would have had with all s sources per phase
  long vanilla_equivalent_solves = 0;
  std::vector<IterationRecord> history;
};

/// Four-phase stochastic Gauss-Newton driver: fit with n_k combined
/// sources, cross-validate the step, gate with the uncertainty check, and
/// terminate on the necessary test. n_k doubles (never shrinks, capped at
/// s) whenever cross validation or the line search fails.
InverseReport invert(const InversionProblem& problem,
                     const ConductivityModel& initial_model,
                     const ProbabilisticStopSpec& spec,
                     const InverseOptions& options);

} // namespace probstop
