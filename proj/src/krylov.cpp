#include "probstop/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace probstop {

namespace {

void check_inputs(const LinearOperator& op, const Vector& b, double rho) {
  if (!op.apply || op.size < 1)
    throw std::invalid_argument("solver: operator is empty");
  if (b.size() != op.size)
    throw std::invalid_argument("solver: right-hand side size mismatch");
  if (!(rho > 0.0)) throw std::invalid_argument("solver: rho must be positive");
}

} // namespace

double SolverTrace::max_step() const {
  double m = 0.0;
  for (double a : step_history) m = std::max(m, a);
  return m;
}

SolveResult solve_cg(const LinearOperator& op, const Vector& b, double rho,
                     long max_iter) {
  check_inputs(op, b, rho);
  SolveResult out;
  Vector u = Vector::Zero(op.size);
  Vector r = b;
  double rr = r.squaredNorm();
  const double stop = rho * std::sqrt(rr);
  out.trace.residual_history.push_back(std::sqrt(rr));
  if (std::sqrt(rr) <= stop) { // b = 0
    out.solution = std::move(u);
    out.trace.converged = true;
    return out;
  }
  Vector p = r;
  for (long k = 1; k <= max_iter; ++k) {
    const Vector ap = op.apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0))
      throw NumericalError("cg: non-positive curvature direction");
    const double alpha = rr / curvature;
    u += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    out.trace.residual_history.push_back(std::sqrt(rr_new));
    if (std::sqrt(rr_new) <= stop) {
      out.trace.iterations = k;
      out.trace.converged = true;
      break;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  if (!out.trace.converged)
    out.trace.iterations =
        static_cast<long>(out.trace.residual_history.size()) - 1;
  out.solution = std::move(u);
  return out;
}

SolveResult solve_mr(const LinearOperator& op, const Vector& b, double rho,
                     long max_iter) {
  check_inputs(op, b, rho);
  SolveResult out;
  Vector u = Vector::Zero(op.size);
  Vector r = b;
  const double r0 = r.norm();
  const double stop = rho * r0;
  out.trace.residual_history.push_back(r0);
  if (r0 <= stop) {
    out.solution = std::move(u);
    out.trace.converged = true;
    return out;
  }
  Vector ar = op.apply(r);
  Vector p = r;
  Vector ap = ar;
  double r_ar = r.dot(ar);
  for (long k = 1; k <= max_iter; ++k) {
    const double denom = ap.squaredNorm();
    if (!(denom > 0.0) || !(r_ar > 0.0))
      throw NumericalError("mr: breakdown in Orthomin(2) recurrence");
    const double alpha = r_ar / denom;
    u += alpha * p;
    r -= alpha * ap;
    const double rnorm = r.norm();
    out.trace.residual_history.push_back(rnorm);
    if (rnorm <= stop) {
      out.trace.iterations = k;
      out.trace.converged = true;
      break;
    }
    ar = op.apply(r);
    const double r_ar_new = r.dot(ar);
    const double beta = r_ar_new / r_ar;
    p = r + beta * p;
    ap = ar + beta * ap;
    r_ar = r_ar_new;
  }
  if (!out.trace.converged)
    out.trace.iterations =
        static_cast<long>(out.trace.residual_history.size()) - 1;
  out.solution = std::move(u);
  return out;
}

namespace {

// Shared driver for the gradient-descent family u <- u + alpha r. The
// lagged flag delays the steepest-descent ratio by one iteration.
SolveResult gradient_descent(const LinearOperator& op, const Vector& b,
                             double rho, long max_iter, bool lagged) {
  SolveResult out;
  Vector u = Vector::Zero(op.size);
  Vector r = b;
  const double r0 = r.norm();
  const double stop = rho * r0;
  out.trace.residual_history.push_back(r0);
  if (r0 <= stop) {
    out.solution = std::move(u);
    out.trace.converged = true;
    return out;
  }
  double previous_ratio = 0.0;
  for (long k = 1; k <= max_iter; ++k) {
    const Vector ar = op.apply(r);
    const double curvature = r.dot(ar);
    if (!(curvature > 0.0))
      throw NumericalError("gradient descent: non-positive curvature");
    const double ratio = r.squaredNorm() / curvature;
    const double alpha = (lagged && k > 1) ? previous_ratio : ratio;
    previous_ratio = ratio;
    out.trace.step_history.push_back(alpha);
    u += alpha * r;
    r -= alpha * ar;
    const double rnorm = r.norm();
    out.trace.residual_history.push_back(rnorm);
    if (rnorm <= stop) {
      out.trace.iterations = k;
      out.trace.converged = true;
      break;
    }
  }
  if (!out.trace.converged)
    out.trace.iterations =
        static_cast<long>(out.trace.residual_history.size()) - 1;
  out.solution = std::move(u);
  return out;
}

} // namespace

SolveResult solve_sd(const LinearOperator& op, const Vector& b, double rho,
                     long max_iter) {
  check_inputs(op, b, rho);
  return gradient_descent(op, b, rho, max_iter, /*lagged=*/false);
}

SolveResult solve_lsd(const LinearOperator& op, const Vector& b, double rho,
                      long max_iter) {
  check_inputs(op, b, rho);
  return gradient_descent(op, b, rho, max_iter, /*lagged=*/true);
}

double PoissonOperator::lambda_max() const {
  const double hh = h();
  return 4.0 / (hh * hh) * (1.0 + std::cos(std::numbers::pi * hh));
}

double PoissonOperator::lambda_min() const {
  const double hh = h();
  return 4.0 / (hh * hh) * (1.0 - std::cos(std::numbers::pi * hh));
}

Vector PoissonOperator::apply(const Vector& u) const {
  const long m = grid_side;
  if (u.size() != size())
    throw std::invalid_argument("poisson: vector size mismatch");
  Vector out(size());
  const double scale = 1.0 / (h() * h());
  for (long j = 0; j < m; ++j) {
    for (long i = 0; i < m; ++i) {
      const long idx = i + m * j;
      double v = 4.0 * u[idx];
      if (i > 0) v -= u[idx - 1];
      if (i + 1 < m) v -= u[idx + 1];
      if (j > 0) v -= u[idx - m];
      if (j + 1 < m) v -= u[idx + m];
      out[idx] = scale * v;
    }
  }
  return out;
}

LinearOperator PoissonOperator::as_operator() const {
  LinearOperator op;
  op.size = size();
  op.spd = true;
  op.apply = [*this](const Vector& u) { return apply(u); };
  return op;
}

const char* to_string(IterativeMethod method) {
  switch (method) {
    case IterativeMethod::MR: return "MR";
    case IterativeMethod::CG: return "CG";
    case IterativeMethod::SD: return "SD";
    case IterativeMethod::LSD: return "LSD";
  }
  return "?";
}

SolveResult run_poisson_solver(long s, IterativeMethod method, double rho,
                               long max_iter) {
  const long side = static_cast<long>(std::llround(std::sqrt(static_cast<double>(s))));
  if (side * side != s)
    throw std::invalid_argument("poisson benchmark: s must be a perfect square");
  if (max_iter == 0) max_iter = 50 * s + 1000;
  const PoissonOperator poisson{side};
  const LinearOperator op = poisson.as_operator();
  const Vector b = Vector::Ones(poisson.size());
  switch (method) {
    case IterativeMethod::MR: return solve_mr(op, b, rho, max_iter);
    case IterativeMethod::CG: return solve_cg(op, b, rho, max_iter);
    case IterativeMethod::SD: return solve_sd(op, b, rho, max_iter);
    case IterativeMethod::LSD: return solve_lsd(op, b, rho, max_iter);
  }
  throw std::invalid_argument("poisson benchmark: unknown method");
}

std::vector<BenchmarkRow> poisson_benchmark(const std::vector<long>& sizes,
                                            double rho, long max_iter,
                                            std::vector<IterativeMethod> methods) {
  std::vector<BenchmarkRow> rows;
  for (long s : sizes) {
    for (IterativeMethod method : methods) {
      const SolveResult res = run_poisson_solver(s, method, rho, max_iter);
      BenchmarkRow row;
      row.s = s;
      row.method = method;
      row.iterations = res.trace.iterations;
      row.converged = res.trace.converged;
      row.final_relative_residual = res.trace.final_relative_residual();
      row.max_step = res.trace.max_step();
      rows.push_back(row);
    }
  }
  return rows;
}

} // namespace probstop
