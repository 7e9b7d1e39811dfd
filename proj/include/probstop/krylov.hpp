#pragma once

#include <functional>
#include <string>
#include <vector>

#include "probstop/common.hpp"

namespace probstop {

/// A square operator given only through products v -> A v.
struct LinearOperator {
  std::function<Vector(const Vector&)> apply;
  Index size = 0;
  bool spd = false;
};

/// Per-iteration record of an iterative solve. `iterations` is the first k
/// with ||r_k|| <= rho ||r_0||; residual_history holds ||r_k|| for
/// k = 0..iterations, step_history the alpha_k of gradient methods.
struct SolverTrace {
  long iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;
  std::vector<double> step_history;

  double final_relative_residual() const {
    if (residual_history.empty() || residual_history.front() == 0.0) return 0.0;
    return residual_history.back() / residual_history.front();
  }
  double max_step() const;
};

struct SolveResult {
  Vector solution;
  SolverTrace trace;
};

/// Conjugate gradients.
SolveResult solve_cg(const LinearOperator& op, const Vector& b, double rho,
                     long max_iter);

/// Minimal residual via the Orthomin(2) two-term recurrence (valid for
/// symmetric positive definite operators).
SolveResult solve_mr(const LinearOperator& op, const Vector& b, double rho,
                     long max_iter);

/// Steepest descent: alpha_k = (r_k, r_k) / (r_k, A r_k).
SolveResult solve_sd(const LinearOperator& op, const Vector& b, double rho,
                     long max_iter);

/// Lagged steepest descent: alpha_k is the steepest-descent ratio of the
/// previous residual; alpha_0 falls back to the steepest-descent step.
/// The residual norm decreases non-monotonically.
SolveResult solve_lsd(const LinearOperator& op, const Vector& b, double rho,
                      long max_iter);

/// Matrix-free 5-point Laplacian on the unit square with homogeneous
/// Dirichlet boundary, grid_side interior points per dimension,
/// h = 1/(grid_side + 1). Applied via the stencil; never assembled.
struct PoissonOperator {
  long grid_side = 0;

  double h() const { return 1.0 / (static_cast<double>(grid_side) + 1.0); }
  Index size() const { return static_cast<Index>(grid_side) * grid_side; }
  double lambda_max() const;
  double lambda_min() const;
  double condition_number() const { return lambda_max() / lambda_min(); }

  Vector apply(const Vector& u) const;
  LinearOperator as_operator() const;
};

enum class IterativeMethod { MR, CG, SD, LSD };

const char* to_string(IterativeMethod method);

struct BenchmarkRow {
  long s = 0;
  IterativeMethod method = IterativeMethod::MR;
  long iterations = 0;
  bool converged = false;
  double final_relative_residual = 0.0;
  double max_step = 0.0; ///< max_k alpha_k, gradient methods only
};

SolveResult run_poisson_solver(long s, IterativeMethod method, double rho,
                               long max_iter = 0);

/// Iteration counts for each method on -Laplace u = 1 (b all ones,
/// u_0 = 0) at the given relative-residual tolerance. Sizes must be
/// perfect squares. max_iter = 0 picks a cap proportional to s.
std::vector<BenchmarkRow> poisson_benchmark(const std::vector<long>& sizes,
                                            double rho, long max_iter = 0,
                                            std::vector<IterativeMethod> methods = {
                                                IterativeMethod::MR,
                                                IterativeMethod::CG,
                                                IterativeMethod::SD,
                                                IterativeMethod::LSD});

} // namespace probstop
