#include "probstop/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace probstop {

namespace {

// Dormand-Prince 5(4) tableau. The last stage is the 5th-order result
// evaluated at t + h (FSAL), and e[] holds b5 - b4 for the embedded
// error estimate.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                 a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

struct StepResult {
  Vector y_new;
  Vector k_last; // f(t + h, y_new), reusable as the next first stage
  double scaled_error;
};

StepResult dopri5_step(const IvpProblem& pr, double t, const Vector& y,
                       const Vector& k1, double h, const ToleranceSpec& tol) {
  const Vector k2 = pr.f(t + c2 * h, y + h * (a21 * k1));
  const Vector k3 = pr.f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
  const Vector k4 = pr.f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
  const Vector k5 = pr.f(t + c5 * h,
                         y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const Vector k6 = pr.f(
      t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));

  StepResult res;
  res.y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  res.k_last = pr.f(t + h, res.y_new);
  const Vector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 +
                          e7 * res.k_last);

  double est = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double scale = tol.atol + tol.rtol * std::abs(y[i]);
    const double ratio = std::abs(err[i]) / scale;
    // NaN must reject the step, not vanish inside max()
    est = std::isnan(ratio) ? std::numeric_limits<double>::infinity()
                            : std::max(est, ratio);
  }
  res.scaled_error = est;
  return res;
}

} // namespace

MeshSolution integrate(const IvpProblem& problem, const ToleranceSpec& tol,
                       const IntegrateOptions& options) {
  if (!(problem.t_end > 0.0))
    throw std::invalid_argument("integrate: t_end must be positive");
  if (!(tol.atol > 0.0) && !(tol.rtol > 0.0))
    throw std::invalid_argument("integrate: need atol > 0 or rtol > 0");
  if (!problem.f || problem.v0.size() == 0)
    throw std::invalid_argument("integrate: empty problem");

  MeshSolution mesh;
  double t = 0.0;
  Vector y = problem.v0;
  mesh.nodes.push_back(t);
  mesh.values.push_back(y);

  Vector k1 = problem.f(t, y);
  double h = options.adaptive ? options.initial_step_fraction * problem.t_end
                              : options.fixed_step;
  if (!(h > 0.0)) throw std::invalid_argument("integrate: step must be positive");
  const double h_min = options.min_step_fraction * problem.t_end;

  while (t < problem.t_end) {
    bool clipped = false;
    double h_try = h;
    if (t + h_try >= problem.t_end) {
      h_try = problem.t_end - t;
      clipped = true;
    }

    const StepResult step = dopri5_step(problem, t, y, k1, h_try, tol);
    const bool accept = !options.adaptive || step.scaled_error <= 1.0;

    if (options.adaptive) {
      // NaN-safe: a non-finite estimate falls through to the 0.2 shrink.
      double factor = 0.2;
      if (step.scaled_error > 0.0)
        factor = std::min(
            5.0, std::max(0.2, 0.9 * std::pow(1.0 / step.scaled_error, 0.2)));
      else if (step.scaled_error == 0.0)
        factor = 5.0;
      h = h_try * factor;
      if (h < h_min)
        throw NumericalError("integrate: step size underflow");
    }

    if (accept) {
      t = clipped ? problem.t_end : t + h_try;
      y = step.y_new;
      k1 = step.k_last;
      mesh.nodes.push_back(t);
      mesh.values.push_back(y);
      mesh.accepted_error_estimates.push_back(step.scaled_error);
      ++mesh.accepted;
    } else {
      ++mesh.rejected;
    }
  }
  return mesh;
}

double OscillatorStudy::hamiltonian(double q, double p, double t,
                                    double lambda) {
  const double a = (1.0 + t) * q;
  const double b = lambda * p;
  return 0.5 * (a * a + b * b);
}

double OscillatorStudy::invariant(double q, double p, double t,
                                  double lambda) {
  return hamiltonian(q, p, t, lambda) / (1.0 + t);
}

IvpProblem OscillatorStudy::problem() const {
  IvpProblem pr;
  pr.t_end = 1.0;
  pr.v0 = Vector(2);
  pr.v0 << 1.0, 0.0; // (q, p)
  const double lambda2 = lambda * lambda;
  pr.f = [lambda2](double t, const Vector& u) {
    Vector du(2);
    du[0] = lambda2 * u[1];
    du[1] = -(1.0 + t) * (1.0 + t) * u[0];
    return du;
  };
  return pr;
}

double max_adiabatic_drift(const MeshSolution& mesh, double lambda) {
  const Vector& u0 = mesh.values.front();
  const double j0 = OscillatorStudy::invariant(u0[0], u0[1], 0.0, lambda);
  double sup = 0.0;
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    const Vector& u = mesh.values[i];
    const double j =
        OscillatorStudy::invariant(u[0], u[1], mesh.nodes[i], lambda);
    sup = std::max(sup, std::abs(j - j0) / j0);
  }
  return sup;
}

double adiabatic_drift(double lambda, const ToleranceSpec& tol,
                       MeshSolution* solution_out) {
  if (!(lambda >= 1.0))
    throw std::invalid_argument("adiabatic_drift: lambda must be >= 1");
  const OscillatorStudy study{lambda};
  const MeshSolution mesh = integrate(study.problem(), tol);
  const Vector& u0 = mesh.values.front();
  const Vector& u1 = mesh.values.back();
  const double j0 = OscillatorStudy::invariant(u0[0], u0[1], 0.0, lambda);
  const double j1 = OscillatorStudy::invariant(u1[0], u1[1], 1.0, lambda);
  if (solution_out) *solution_out = mesh;
  return std::abs(j1 - j0) / j0;
}

} // namespace probstop
