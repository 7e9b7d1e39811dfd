#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/SparseCore>

#include "probstop/common.hpp"
#include "probstop/probes.hpp"

namespace probstop {

/// Uniform cell-centered grid over the unit square, nx cells per side.
struct Grid {
  long nx = 0;

  double h() const { return 1.0 / static_cast<double>(nx); }
  Index cells() const { return static_cast<Index>(nx) * nx; }
  Index index(long i, long j) const { return i + nx * j; }
  double center_x(long i) const { return (static_cast<double>(i) + 0.5) * h(); }
  double center_y(long j) const { return (static_cast<double>(j) + 0.5) * h(); }
  /// boundary cells in a closed walk (bottom, right, top, left)
  std::vector<Index> boundary_cells() const;
};

/// Conductivity field parameterized by its logarithm: mu = exp(m) per
/// cell, so mu stays positive for any m.
struct ConductivityModel {
  Grid grid;
  Vector log_mu;

  Vector mu() const { return log_mu.array().exp(); }
};

/// Columns are per-cell integrated source strengths; each column sums to
/// zero (compatibility for the pure-Neumann problem).
struct SourceSet {
  Matrix q; // cells x s

  Index count() const { return q.cols(); }
};

/// Receivers sample the field at a fixed set of cells.
struct ReceiverSet {
  std::vector<Index> cells;

  Index count() const { return static_cast<Index>(cells.size()); }
  Vector extract(const Vector& field) const;
};

struct DataSet {
  Matrix d; // receivers x sources
  double sigma = 0.0;
};

/// Misfit tolerance from the discrepancy principle: rho = sigma^2 l s.
struct DiscrepancyTarget {
  double rho = 0.0;
  double sigma = 0.0;
  Index l = 0;
  Index s = 0;

  static DiscrepancyTarget from_noise(double sigma, Index l, Index s);
};

/// Finite-volume discretization of -div(mu grad u) = -q on the unit
/// square with zero-flux boundary: per cell, sum_faces t_f (u_a - u_b)
/// with t_f the harmonic mean of the adjacent cell conductivities. The
/// operator has the constant nullspace; fields are pinned to zero mean.
///
/// Each logical PDE solve (one source, one conductivity) bumps an atomic
/// counter regardless of how the linear system is solved internally.
class ForwardSolver {
public:
  explicit ForwardSolver(Grid grid) : grid_(grid) {}

  /// Assembled operator matrix for the given model (symmetric, singular
  /// with nullspace span{1}).
  Eigen::SparseMatrix<double> operator_matrix(const ConductivityModel& model) const;

  Vector apply_operator(const ConductivityModel& model, const Vector& u) const;

  /// Direct factorization reused across solves with the same conductivity.
  class Factorized;
  Factorized factorize(const ConductivityModel& model) const;

  /// One PDE solve: returns the zero-mean field u with
  /// -div(mu grad u) = -q. The source must sum to zero (|sum| <= 1e-12).
  Vector solve(const Factorized& fact, const Vector& q) const;
  Vector solve(const ConductivityModel& model, const Vector& q) const;

  /// Zero-mean solution of A x = rhs with rhs projected to zero mean;
  /// used for adjoint and sensitivity systems. Counts as one PDE solve.
  Vector solve_adjoint(const Factorized& fact, const Vector& rhs) const;

  const Grid& grid() const { return grid_; }
  long solve_count() const { return solves_.load(); }
  void reset_solve_count() { solves_.store(0); }

private:
  Grid grid_;
  mutable std::atomic<long> solves_{0};
};

class ForwardSolver::Factorized {
public:
  Vector solve_linear(const Vector& rhs) const; ///< no counter, gauge-fixed
  const Eigen::SparseMatrix<double>& matrix() const;

private:
  friend class ForwardSolver;
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Dipole source: +1 at one cell, -1 at another.
Vector make_dipole(const Grid& grid, Index cell_plus, Index cell_minus);

/// s dipole sources spread deterministically around the boundary walk.
SourceSet make_boundary_dipole_sources(const Grid& grid, Index s);

/// Receivers on the bottom edge plus the lower half of the left edge;
/// covers less than half of the boundary cells.
ReceiverSet make_partial_boundary_receivers(const Grid& grid);

/// Predicted data F(m): column i is the receiver sample of the field for
/// source i. Costs exactly sources.count() PDE solves.
Matrix predict(const ForwardSolver& solver, const ConductivityModel& model,
               const SourceSet& sources, const ReceiverSet& receivers);

/// Full data misfit: squared Frobenius norm of F(m) - D. Costs exactly
/// sources.count() PDE solves.
double misfit(const ForwardSolver& solver, const ConductivityModel& model,
              const DataSet& data, const SourceSet& sources,
              const ReceiverSet& receivers);

/// Randomized misfit estimate (1/n) sum_j ||F(m) w_j - D w_j||^2. Each
/// probe combines the sources into one, so the cost is exactly n PDE
/// solves; the data side combines as D w_j at no solve cost. Unbiased for
/// the full misfit.
double misfit_estimate(const ForwardSolver& solver,
                       const ConductivityModel& model, const DataSet& data,
                       const SourceSet& sources, const ReceiverSet& receivers,
                       ProbeDistribution dist, long n, std::uint64_t seed);

/// D = F(m) + sigma * N(0,1) entrywise, seeded.
DataSet make_noisy_data(const Matrix& clean, double sigma, std::uint64_t seed);

} // namespace probstop
