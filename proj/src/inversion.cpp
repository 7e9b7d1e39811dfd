#include "probstop/inversion.hpp"

#include <cmath>
#include <limits>

#include "probstop/chi_squared.hpp"

namespace probstop {

ProbabilisticStopSpec make_stop_spec(const DiscrepancyTarget& target,
                                     QuantifierPair cross_validation,
                                     QuantifierPair uncertainty,
                                     QuantifierPair termination, Index s) {
  if (s < 1) throw std::invalid_argument("make_stop_spec: s must be >= 1");
  ProbabilisticStopSpec spec;
  spec.target = target;
  spec.cross_validation = cross_validation;
  spec.uncertainty = uncertainty;
  spec.termination = termination;

  // The cap binds only when the derived size exceeds s; a test whose
  // derived size happens to equal s still runs at its conforming sample
  // size (same cost either way, but the probabilistic guarantee is the
  // derived one).
  const auto capped = [s](long n, bool& exact) {
    exact = n > s;
    return exact ? static_cast<long>(s) : n;
  };

  // The cross-validation inequality compares an estimate from below with
  // one from above, so it needs both one-sided sizes; the uncertainty
  // check only needs the lower condition; the termination phase evaluates
  // both the hard and the soft test.
  const long cv = std::max(
      min_n_lower(cross_validation.eps, cross_validation.delta).n0,
      min_n_upper(cross_validation.eps, cross_validation.delta).first.n0);
  const long unc = min_n_lower(uncertainty.eps, uncertainty.delta).n0;
  const long term =
      std::max(min_n_lower(termination.eps, termination.delta).n0,
               min_n_upper(termination.eps, termination.delta).first.n0);

  spec.n_c = capped(cv, spec.n_c_exact);
  spec.n_u = capped(unc, spec.n_u_exact);
  spec.n_t = capped(term, spec.n_t_exact);
  return spec;
}

namespace {

void check_rho_eps(double rho, double eps, bool allow_zero_eps) {
  if (!(rho > 0.0)) throw std::invalid_argument("stop test: rho must be > 0");
  const bool eps_ok = allow_zero_eps ? (eps >= 0.0 && eps < 1.0)
                                     : (eps > 0.0 && eps < 1.0);
  if (!eps_ok) throw std::invalid_argument("stop test: eps out of range");
}

} // namespace

bool stop_test_hard(double phi_hat, double rho, double eps) {
  check_rho_eps(rho, eps, false);
  return phi_hat <= (1.0 - eps) * rho;
}

bool stop_test_soft(double phi_hat, double rho, double eps) {
  check_rho_eps(rho, eps, false);
  return phi_hat <= (1.0 + eps) * rho;
}

bool cross_validation_test(double phi_new, double phi_old, double eps) {
  if (!(eps > 0.0) || !(eps < 1.0))
    throw std::invalid_argument("cross_validation_test: eps out of range");
  return (1.0 - eps) * phi_new <= (1.0 + eps) * phi_old;
}

bool uncertainty_check(double phi_hat, double rho, double eps) {
  check_rho_eps(rho, eps, true);
  return phi_hat <= (1.0 - eps) * rho;
}

Matrix probe_weights(Index s, long n, ProbeDistribution dist,
                     std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("probe_weights: n must be >= 1");
  const ProbeStream stream{dist, s, seed};
  Matrix w(s, n);
  for (long j = 0; j < n; ++j)
    w.col(j) = draw_probe(stream, static_cast<std::uint64_t>(j));
  return w;
}

Matrix exact_weights(Index s) {
  return std::sqrt(static_cast<double>(s)) * Matrix::Identity(s, s);
}

namespace {

// Interior faces of the grid with the transmissibility t = harm(mu_a,
// mu_b) and its derivatives with respect to the log-conductivities of the
// two adjacent cells. All sensitivity machinery reduces to sums over
// these faces.
struct Faces {
  struct Face {
    Index a, b;
    double t, dt_da, dt_db;
  };
  std::vector<Face> faces;

  static Faces build(const ConductivityModel& model) {
    const long nx = model.grid.nx;
    const Vector mu = model.mu();
    Faces out;
    out.faces.reserve(static_cast<std::size_t>(2 * nx * (nx - 1)));
    auto add = [&](Index a, Index b) {
      const double ma = mu[a], mb = mu[b];
      const double denom = (ma + mb) * (ma + mb);
      Face f;
      f.a = a;
      f.b = b;
      f.t = 2.0 * ma * mb / (ma + mb);
      // d t / d m_a = (d t / d mu_a) * mu_a, mu = exp(m)
      f.dt_da = 2.0 * mb * mb / denom * ma;
      f.dt_db = 2.0 * ma * ma / denom * mb;
      out.faces.push_back(f);
    };
    for (long j = 0; j < nx; ++j)
      for (long i = 0; i + 1 < nx; ++i)
        add(model.grid.index(i, j), model.grid.index(i + 1, j));
    for (long j = 0; j + 1 < nx; ++j)
      for (long i = 0; i < nx; ++i)
        add(model.grid.index(i, j), model.grid.index(i, j + 1));
    return out;
  }

  // g_c = sum_{faces at c} dt/dm_c (u_a - u_b)(v_a - v_b)
  Vector adjoint_product(Index cells, const Vector& u, const Vector& v) const {
    Vector g = Vector::Zero(cells);
    for (const Face& f : faces) {
      const double s = (u[f.a] - u[f.b]) * (v[f.a] - v[f.b]);
      g[f.a] += f.dt_da * s;
      g[f.b] += f.dt_db * s;
    }
    return g;
  }

  // z = (dA(v)) u: the operator perturbed in the direction v, applied to u
  Vector directional_apply(Index cells, const Vector& v, const Vector& u) const {
    Vector z = Vector::Zero(cells);
    for (const Face& f : faces) {
      const double dt = f.dt_da * v[f.a] + f.dt_db * v[f.b];
      const double flux = dt * (u[f.a] - u[f.b]);
      z[f.a] += flux;
      z[f.b] -= flux;
    }
    return z;
  }
};

Vector scatter_to_cells(const ReceiverSet& receivers, const Vector& values,
                        Index cells) {
  Vector out = Vector::Zero(cells);
  for (Index i = 0; i < receivers.count(); ++i)
    out[receivers.cells[static_cast<std::size_t>(i)]] += values[i];
  return out;
}

void check_problem(const InversionProblem& p) {
  if (!p.solver || !p.sources || !p.receivers || !p.data)
    throw std::invalid_argument("inversion: incomplete problem");
  if (p.data->d.rows() != p.receivers->count() ||
      p.data->d.cols() != p.sources->count())
    throw std::invalid_argument("inversion: data dimensions disagree");
}

// Forward state shared by the misfit, gradient and Gauss-Newton pieces:
// fields and residuals for every weight column under one factorization.
struct FitState {
  ForwardSolver::Factorized fact;
  Faces faces;
  std::vector<Vector> fields;     // u_j
  std::vector<Vector> residuals;  // P u_j - D w_j
  double phi = 0.0;

  static FitState build(const InversionProblem& p,
                        const ConductivityModel& model, const Matrix& weights) {
    FitState st;
    st.fact = p.solver->factorize(model);
    st.faces = Faces::build(model);
    const long n = static_cast<long>(weights.cols());
    st.fields.reserve(static_cast<std::size_t>(n));
    st.residuals.reserve(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (long j = 0; j < n; ++j) {
      const Vector combined = p.sources->q * weights.col(j);
      Vector u = p.solver->solve(st.fact, combined);
      Vector r = p.receivers->extract(u) - p.data->d * weights.col(j);
      sum += r.squaredNorm();
      st.fields.push_back(std::move(u));
      st.residuals.push_back(std::move(r));
    }
    st.phi = sum / static_cast<double>(n);
    return st;
  }
};

Vector gradient_from_state(const InversionProblem& p, const FitState& st,
                           Index cells) {
  const long n = static_cast<long>(st.fields.size());
  Vector g = Vector::Zero(cells);
  for (long j = 0; j < n; ++j) {
    const Vector rhs = scatter_to_cells(*p.receivers, st.residuals[static_cast<std::size_t>(j)], cells);
    const Vector lambda = p.solver->solve_adjoint(st.fact, rhs);
    g -= st.faces.adjoint_product(cells, st.fields[static_cast<std::size_t>(j)], lambda);
  }
  return g * (2.0 / static_cast<double>(n));
}

// Gauss-Newton curvature product H v = (2/n) sum_j J_j^T J_j v; two
// sensitivity solves per weight column.
Vector gauss_newton_product(const InversionProblem& p, const FitState& st,
                            Index cells, const Vector& v) {
  const long n = static_cast<long>(st.fields.size());
  Vector hv = Vector::Zero(cells);
  for (long j = 0; j < n; ++j) {
    const Vector& u = st.fields[static_cast<std::size_t>(j)];
    const Vector z = st.faces.directional_apply(cells, v, u);
    const Vector y = p.solver->solve_adjoint(st.fact, z);
    const Vector jv = p.receivers->extract(y); // = -J_j v
    const Vector mu = p.solver->solve_adjoint(
        st.fact, scatter_to_cells(*p.receivers, jv, cells));
    hv += st.faces.adjoint_product(cells, u, mu);
  }
  return hv * (2.0 / static_cast<double>(n));
}

// Truncated CG on the normal equations; the iteration cap is the implicit
// regularization.
Vector truncated_cg_direction(const InversionProblem& p, const FitState& st,
                              Index cells, const Vector& g, long limit) {
  Vector delta = Vector::Zero(cells);
  Vector r = -g;
  Vector pdir = r;
  double rr = r.squaredNorm();
  const double stop = 1e-16 * rr;
  for (long it = 0; it < limit && rr > stop; ++it) {
    const Vector hp = gauss_newton_product(p, st, cells, pdir);
    const double curvature = pdir.dot(hp);
    if (!(curvature > 1e-14 * pdir.squaredNorm())) break;
    const double alpha = rr / curvature;
    delta += alpha * pdir;
    r -= alpha * hp;
    const double rr_new = r.squaredNorm();
    pdir = r + (rr_new / rr) * pdir;
    rr = rr_new;
  }
  return delta;
}

} // namespace

double sampled_misfit(const InversionProblem& problem,
                      const ConductivityModel& model, const Matrix& weights) {
  check_problem(problem);
  if (weights.rows() != problem.source_count())
    throw std::invalid_argument("sampled_misfit: weight dimension mismatch");
  return FitState::build(problem, model, weights).phi;
}

Vector sampled_misfit_gradient(const InversionProblem& problem,
                               const ConductivityModel& model,
                               const Matrix& weights) {
  check_problem(problem);
  const FitState st = FitState::build(problem, model, weights);
  return gradient_from_state(problem, st, model.grid.cells());
}

AsgnResult asgn_step(const InversionProblem& problem,
                     const ConductivityModel& model, const Matrix& weights,
                     const AsgnOptions& options) {
  check_problem(problem);
  const Index cells = model.grid.cells();

  AsgnResult result;
  result.model = model;

  const FitState st = FitState::build(problem, model, weights);
  result.phi_start = st.phi;
  const Vector g = gradient_from_state(problem, st, cells);
  result.gradient_norm = g.norm();

  if (result.gradient_norm == 0.0) { // stationary point of the sampled misfit
    result.phi_end = st.phi;
    result.ok = true;
    return result;
  }

  Vector direction =
      truncated_cg_direction(problem, st, cells, g, options.inner_cg_limit);
  double slope = g.dot(direction);
  if (!(slope < 0.0)) { // fall back to steepest descent
    direction = -g;
    slope = g.dot(direction);
  }

  double step = 1.0;
  for (long bt = 0; bt <= options.max_backtracks; ++bt) {
    ConductivityModel trial{model.grid, model.log_mu + step * direction};
    const double phi_trial = sampled_misfit(problem, trial, weights);
    if (phi_trial <= st.phi + options.armijo_slope * step * slope) {
      result.model = std::move(trial);
      result.phi_end = phi_trial;
      result.step_length = step;
      result.backtracks = bt;
      result.ok = true;
      return result;
    }
    step *= 0.5;
  }
  result.phi_end = st.phi;
  result.ok = false;
  return result;
}

namespace {

enum SeedPhase : std::uint64_t {
  kFitPhase = 1,
  kCvNewPhase = 2,
  kCvOldPhase = 3,
  kUncertaintyPhase = 4,
  kTerminationPhase = 5,
};

std::uint64_t phase_seed(std::uint64_t master, SeedPhase phase, long k) {
  return mix_seed(mix_seed(master, static_cast<std::uint64_t>(phase)),
                  static_cast<std::uint64_t>(k));
}

} // namespace

InverseReport invert(const InversionProblem& problem,
                     const ConductivityModel& initial_model,
                     const ProbabilisticStopSpec& spec,
                     const InverseOptions& options) {
  check_problem(problem);
  const Index s = problem.source_count();
  const double rho = spec.target.rho;
  if (!(rho > 0.0)) throw std::invalid_argument("invert: rho must be > 0");

  InverseReport report;
  report.model_final = initial_model;

  ConductivityModel m = initial_model;
  long n_k = options.vanilla ? static_cast<long>(s)
                             : std::min<long>(options.n0, s);
  // exact misfit of the current iterate, when some exact phase already
  // computed it (deterministic, so reuse is free)
  std::optional<double> exact_phi_current;
  double last_phi_estimate = std::numeric_limits<double>::quiet_NaN();

  const long n_c = options.vanilla ? s : spec.n_c;
  const long n_u = options.vanilla ? s : spec.n_u;
  const long n_t = options.vanilla ? s : spec.n_t;
  const bool c_exact = options.vanilla || spec.n_c_exact;
  const bool u_exact = options.vanilla || spec.n_u_exact;
  const bool t_exact = options.vanilla || spec.n_t_exact;

  double vanilla_equivalent = 0.0;
  const auto solves = [&] { return problem.solver->solve_count(); };
  const long solves_at_start = solves();

  const auto eval_phi = [&](const ConductivityModel& model, long n, bool exact,
                            SeedPhase phase, long k) {
    if (exact)
      return sampled_misfit(problem, model, exact_weights(s));
    return sampled_misfit(
        problem, model,
        probe_weights(s, n, options.distribution,
                      phase_seed(options.master_seed, phase, k)));
  };

  for (long k = 1; k <= options.max_outer; ++k) {
    IterationRecord rec;
    rec.k = k;
    rec.n_k = n_k;

    // phase 1: fitting step with n_k combined sources
    long mark = solves();
    const bool fit_exact = n_k >= s;
    const Matrix w_fit =
        fit_exact ? exact_weights(s)
                  : probe_weights(s, n_k, options.distribution,
                                  phase_seed(options.master_seed, kFitPhase, k));
    AsgnResult step = asgn_step(problem, m, w_fit, options.asgn);
    rec.step_ok = step.ok;
    rec.phi_fit_start = step.phi_start;
    rec.phi_fit_end = step.phi_end;
    rec.gradient_norm = step.gradient_norm;
    rec.solves_fit = solves() - mark;
    vanilla_equivalent += static_cast<double>(rec.solves_fit) *
                          static_cast<double>(s) / static_cast<double>(n_k);

    if (!step.ok) {
      if (n_k >= s) { // full-sample line search failed: stuck
        rec.solves_cumulative = solves() - solves_at_start;
        report.history.push_back(rec);
        break;
      }
      n_k = std::min<long>(n_k * options.escalation_factor, s);
      rec.escalated = true;
      rec.solves_cumulative = solves() - solves_at_start;
      report.history.push_back(rec);
      continue;
    }

    // phase 2: cross validation with independent probe sets
    mark = solves();
    const double phi_new =
        eval_phi(step.model, n_c, c_exact, kCvNewPhase, k);
    double phi_old;
    if (c_exact && exact_phi_current) {
      phi_old = *exact_phi_current;
    } else {
      phi_old = eval_phi(m, n_c, c_exact, kCvOldPhase, k);
    }
    rec.cv_new = phi_new;
    rec.cv_old = phi_old;
    last_phi_estimate = phi_new;
    const bool cv_ok =
        cross_validation_test(phi_new, phi_old, spec.cross_validation.eps);
    rec.cv_pass = cv_ok;
    rec.solves_cv = solves() - mark;
    vanilla_equivalent += static_cast<double>(rec.solves_cv) *
                          static_cast<double>(s) / static_cast<double>(n_c);

    if (!cv_ok) { // candidate rejected; refit from m with a larger sample
      if (c_exact) exact_phi_current = phi_old;
      n_k = std::min<long>(n_k * options.escalation_factor, s);
      rec.escalated = true;
      rec.solves_cumulative = solves() - solves_at_start;
      report.history.push_back(rec);
      continue;
    }

    m = step.model;
    exact_phi_current = c_exact ? std::optional<double>(phi_new) : std::nullopt;

    // phase 3: uncertainty check
    mark = solves();
    double phi_unc;
    if (u_exact && exact_phi_current) {
      phi_unc = *exact_phi_current;
    } else {
      phi_unc = eval_phi(m, n_u, u_exact, kUncertaintyPhase, k);
      if (u_exact) exact_phi_current = phi_unc;
    }
    rec.uncertainty_value = phi_unc;
    last_phi_estimate = phi_unc;
    const bool unc_ok = uncertainty_check(phi_unc, rho, spec.uncertainty.eps);
    rec.uncertainty_pass = unc_ok;
    rec.solves_uncertainty = solves() - mark;
    vanilla_equivalent += static_cast<double>(rec.solves_uncertainty) *
                          static_cast<double>(s) / static_cast<double>(n_u);

    if (!unc_ok) {
      rec.solves_cumulative = solves() - solves_at_start;
      report.history.push_back(rec);
      continue;
    }

    // phase 4: termination test
    mark = solves();
    double phi_term;
    if (t_exact && exact_phi_current) {
      phi_term = *exact_phi_current;
    } else {
      phi_term = eval_phi(m, n_t, t_exact, kTerminationPhase, k);
      if (t_exact) exact_phi_current = phi_term;
    }
    rec.termination_value = phi_term;
    const bool hard = stop_test_hard(phi_term, rho, spec.termination.eps);
    const bool soft = stop_test_soft(phi_term, rho, spec.termination.eps);
    rec.termination_hard = hard;
    rec.termination_soft = soft;
    rec.solves_termination = solves() - mark;
    vanilla_equivalent += static_cast<double>(rec.solves_termination) *
                          static_cast<double>(s) / static_cast<double>(n_t);
    rec.solves_cumulative = solves() - solves_at_start;
    report.history.push_back(rec);

    last_phi_estimate = phi_term;
    if (soft) {
      report.converged = true;
      break;
    }
  }

  report.phi_hat_final = last_phi_estimate;
  report.iterations = static_cast<long>(report.history.size());
  report.model_final = m;
  report.n_k_final = n_k;
  report.solve_count = solves() - solves_at_start;
  report.vanilla_equivalent_solves =
      static_cast<long>(std::llround(vanilla_equivalent));
  return report;
}

} // namespace probstop
