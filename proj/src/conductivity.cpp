#include "probstop/conductivity.hpp"

#include <cmath>

#include <Eigen/SparseCholesky>

namespace probstop {

std::vector<Index> Grid::boundary_cells() const {
  std::vector<Index> cells;
  if (nx == 1) return {0};
  for (long i = 0; i < nx; ++i) cells.push_back(index(i, 0));
  for (long j = 1; j < nx; ++j) cells.push_back(index(nx - 1, j));
  for (long i = nx - 2; i >= 0; --i) cells.push_back(index(i, nx - 1));
  for (long j = nx - 2; j >= 1; --j) cells.push_back(index(0, j));
  return cells;
}

Vector ReceiverSet::extract(const Vector& field) const {
  Vector out(count());
  for (Index i = 0; i < count(); ++i) out[i] = field[cells[static_cast<std::size_t>(i)]];
  return out;
}

DiscrepancyTarget DiscrepancyTarget::from_noise(double sigma, Index l, Index s) {
  if (!(sigma > 0.0) || l < 1 || s < 1)
    throw std::invalid_argument("discrepancy target: need sigma > 0, l, s >= 1");
  DiscrepancyTarget t;
  t.sigma = sigma;
  t.l = l;
  t.s = s;
  t.rho = sigma * sigma * static_cast<double>(l) * static_cast<double>(s);
  return t;
}

namespace {

double harmonic_mean(double a, double b) { return 2.0 * a * b / (a + b); }

void check_model(const ConductivityModel& model) {
  if (model.grid.nx < 2 || model.log_mu.size() != model.grid.cells())
    throw std::invalid_argument("conductivity model: bad grid or field size");
}

} // namespace

Eigen::SparseMatrix<double> ForwardSolver::operator_matrix(
    const ConductivityModel& model) const {
  check_model(model);
  const long nx = grid_.nx;
  const Vector mu = model.mu();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * grid_.cells()));
  auto add_face = [&](Index a, Index b) {
    const double t = harmonic_mean(mu[a], mu[b]);
    trip.emplace_back(a, a, t);
    trip.emplace_back(b, b, t);
    trip.emplace_back(a, b, -t);
    trip.emplace_back(b, a, -t);
  };
  for (long j = 0; j < nx; ++j)
    for (long i = 0; i + 1 < nx; ++i)
      add_face(grid_.index(i, j), grid_.index(i + 1, j));
  for (long j = 0; j + 1 < nx; ++j)
    for (long i = 0; i < nx; ++i)
      add_face(grid_.index(i, j), grid_.index(i, j + 1));
  Eigen::SparseMatrix<double> a(grid_.cells(), grid_.cells());
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

Vector ForwardSolver::apply_operator(const ConductivityModel& model,
                                     const Vector& u) const {
  return operator_matrix(model) * u;
}

struct ForwardSolver::Factorized::Impl {
  Eigen::SparseMatrix<double> a;
  // gauge-fixed principal minor (last cell grounded); SPD
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
};

Vector ForwardSolver::Factorized::solve_linear(const Vector& rhs) const {
  const Index n = impl_->a.rows();
  Vector u = Vector::Zero(n);
  u.head(n - 1) = impl_->ldlt.solve(rhs.head(n - 1));
  // one refinement pass keeps the residual near machine level even for
  // high-contrast conductivities
  const Vector res = rhs - impl_->a * u;
  u.head(n - 1) += impl_->ldlt.solve(res.head(n - 1));
  u.array() -= u.mean();
  return u;
}

const Eigen::SparseMatrix<double>& ForwardSolver::Factorized::matrix() const {
  return impl_->a;
}

ForwardSolver::Factorized ForwardSolver::factorize(
    const ConductivityModel& model) const {
  auto impl = std::make_shared<Factorized::Impl>();
  impl->a = operator_matrix(model);
  const Index n = impl->a.rows();
  const Eigen::SparseMatrix<double> reduced =
      impl->a.topLeftCorner(n - 1, n - 1);
  impl->ldlt.compute(reduced);
  if (impl->ldlt.info() != Eigen::Success)
    throw NumericalError("conductivity: factorization failed");
  Factorized f;
  f.impl_ = std::move(impl);
  return f;
}

Vector ForwardSolver::solve(const Factorized& fact, const Vector& q) const {
  if (!fact.impl_) throw std::invalid_argument("solve: empty factorization");
  if (q.size() != fact.matrix().rows())
    throw std::invalid_argument("solve: source size mismatch");
  if (std::abs(q.sum()) > 1e-12)
    throw std::invalid_argument("solve: source must sum to zero");
  solves_.fetch_add(1, std::memory_order_relaxed);
  const Vector u = fact.solve_linear(-q);
  const double qn = q.norm();
  if (qn > 0.0) {
    const double res = (fact.matrix() * u + q).norm();
    if (res > 1e-10 * qn)
      throw NumericalError("solve: discrete residual above tolerance");
  }
  return u;
}

Vector ForwardSolver::solve(const ConductivityModel& model,
                            const Vector& q) const {
  return solve(factorize(model), q);
}

Vector ForwardSolver::solve_adjoint(const Factorized& fact,
                                    const Vector& rhs) const {
  if (!fact.impl_) throw std::invalid_argument("solve_adjoint: empty factorization");
  if (rhs.size() != fact.matrix().rows())
    throw std::invalid_argument("solve_adjoint: size mismatch");
  solves_.fetch_add(1, std::memory_order_relaxed);
  Vector projected = rhs;
  projected.array() -= projected.mean();
  return fact.solve_linear(projected);
}

Vector make_dipole(const Grid& grid, Index cell_plus, Index cell_minus) {
  if (cell_plus == cell_minus)
    throw std::invalid_argument("dipole: cells must be distinct");
  Vector q = Vector::Zero(grid.cells());
  q[cell_plus] = 1.0;
  q[cell_minus] = -1.0;
  return q;
}

SourceSet make_boundary_dipole_sources(const Grid& grid, Index s) {
  const std::vector<Index> walk = grid.boundary_cells();
  const Index nb = static_cast<Index>(walk.size());
  if (nb < 2 || s < 1)
    throw std::invalid_argument("sources: need >= 2 boundary cells, s >= 1");
  SourceSet set;
  set.q.resize(grid.cells(), s);
  // coprime-ish strides keep electrode pairs spread around the boundary
  for (Index i = 0; i < s; ++i) {
    const Index plus = (13 * i) % nb;
    Index minus = (plus + nb / 2 + 7 * (i % 5)) % nb;
    if (minus == plus) minus = (minus + 1) % nb;
    set.q.col(i) = make_dipole(grid, walk[static_cast<std::size_t>(plus)],
                               walk[static_cast<std::size_t>(minus)]);
  }
  return set;
}

ReceiverSet make_partial_boundary_receivers(const Grid& grid) {
  ReceiverSet r;
  for (long i = 0; i < grid.nx; ++i) r.cells.push_back(grid.index(i, 0));
  for (long j = 1; j <= grid.nx / 2 - 1; ++j) r.cells.push_back(grid.index(0, j));
  return r;
}

Matrix predict(const ForwardSolver& solver, const ConductivityModel& model,
               const SourceSet& sources, const ReceiverSet& receivers) {
  const ForwardSolver::Factorized fact = solver.factorize(model);
  Matrix f(receivers.count(), sources.count());
  for (Index i = 0; i < sources.count(); ++i)
    f.col(i) = receivers.extract(solver.solve(fact, sources.q.col(i)));
  return f;
}

double misfit(const ForwardSolver& solver, const ConductivityModel& model,
              const DataSet& data, const SourceSet& sources,
              const ReceiverSet& receivers) {
  if (data.d.rows() != receivers.count() || data.d.cols() != sources.count())
    throw std::invalid_argument("misfit: data dimensions disagree");
  const Matrix f = predict(solver, model, sources, receivers);
  return (f - data.d).squaredNorm();
}

double misfit_estimate(const ForwardSolver& solver,
                       const ConductivityModel& model, const DataSet& data,
                       const SourceSet& sources, const ReceiverSet& receivers,
                       ProbeDistribution dist, long n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("misfit_estimate: n must be >= 1");
  if (data.d.rows() != receivers.count() || data.d.cols() != sources.count())
    throw std::invalid_argument("misfit_estimate: data dimensions disagree");
  const ProbeStream stream{dist, sources.count(), seed};
  const ForwardSolver::Factorized fact = solver.factorize(model);
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (long j = 0; j < n; ++j) {
    const Vector w = draw_probe(stream, static_cast<std::uint64_t>(j));
    const Vector combined = sources.q * w; // one field evaluation per probe
    const Vector u = solver.solve(fact, combined);
    terms[static_cast<std::size_t>(j)] =
        (receivers.extract(u) - data.d * w).squaredNorm();
  }
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum / static_cast<double>(n);
}

DataSet make_noisy_data(const Matrix& clean, double sigma, std::uint64_t seed) {
  DataSet data;
  data.sigma = sigma;
  data.d = clean;
  const ProbeStream noise{ProbeDistribution::Gaussian, clean.rows(), seed};
  for (Index i = 0; i < clean.cols(); ++i)
    data.d.col(i) += sigma * draw_probe(noise, static_cast<std::uint64_t>(i));
  return data;
}

} // namespace probstop
