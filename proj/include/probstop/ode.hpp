#pragma once

#include <functional>
#include <vector>

#include "probstop/common.hpp"

namespace probstop {

/// Initial value problem du/dt = f(t, u) on [0, t_end], u(0) = v0.
struct IvpProblem {
  std::function<Vector(double, const Vector&)> f;
  Vector v0;
  double t_end = 0.0;
};

struct ToleranceSpec {
  double atol = 1e-6;
  double rtol = 1e-3;
};

struct IntegrateOptions {
  /// first step as a fraction of t_end
  double initial_step_fraction = 1e-3;
  /// integration fails when h drops below this fraction of t_end
  double min_step_fraction = 1e-14;
  /// when false, march with constant step fixed_step (no error control)
  bool adaptive = true;
  double fixed_step = 0.0;
};

/// Accepted mesh 0 = t_0 < ... < t_N = t_end with the solution values and
/// the scaled local-error estimate of each accepted step.
struct MeshSolution {
  std::vector<double> nodes;
  std::vector<Vector> values;
  std::vector<double> accepted_error_estimates;
  long accepted = 0;
  long rejected = 0;

  const Vector& final_value() const { return values.back(); }
};

/// Dormand-Prince 5(4) embedded pair with standard local error control:
/// a step is accepted when max_i |err_i| / (atol + rtol |v_i|) <= 1 (v the
/// state at the start of the step) and the step size is updated by
/// h * min(5, max(0.2, 0.9 est^{-1/5})). Only the local error is
/// controlled; no global-error bound is estimated or enforced.
MeshSolution integrate(const IvpProblem& problem, const ToleranceSpec& tol,
                       const IntegrateOptions& options = {});

/// Linear oscillator with slowly varying frequency:
///   dq/dt = lambda^2 p,        q(0) = 1,
///   dp/dt = -(1+t)^2 q,        p(0) = 0,
/// with energy H(q,p,t) = ((1+t) q)^2 / 2 + (lambda p)^2 / 2. H/(1+t) is
/// an adiabatic invariant: it drifts by O(1/lambda) over [0, 1].
struct OscillatorStudy {
  double lambda = 1000.0;

  static double hamiltonian(double q, double p, double t, double lambda);
  static double invariant(double q, double p, double t, double lambda);
  IvpProblem problem() const;
};

/// Relative drift |J(1) - J(0)| / J(0) of the adiabatic invariant when the
/// oscillator is integrated over [0, 1] with the given tolerances. The
/// full mesh is copied to *solution_out when non-null.
double adiabatic_drift(double lambda, const ToleranceSpec& tol,
                       MeshSolution* solution_out = nullptr);

/// Largest relative invariant drift over all mesh nodes. Unlike the
/// endpoint drift this is not phase-sensitive, so it exposes the 1/lambda
/// envelope cleanly.
double max_adiabatic_drift(const MeshSolution& mesh, double lambda);

} // namespace probstop
