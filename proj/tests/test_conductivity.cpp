#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "probstop/conductivity.hpp"
#include "probstop/experiment.hpp"

using namespace probstop;

namespace {

ConductivityModel bumpy_model(const Grid& grid, double amplitude = 0.5) {
  ConductivityModel model{grid, Vector::Zero(grid.cells())};
  for (long j = 0; j < grid.nx; ++j)
    for (long i = 0; i < grid.nx; ++i)
      model.log_mu[grid.index(i, j)] =
          amplitude * std::sin(1.0 + i) * std::cos(2.0 + j);
  return model;
}

Vector seeded_vector(Index n, std::uint64_t seed) {
  return draw_probe(ProbeStream{ProbeDistribution::Gaussian, n, seed}, 0);
}

} // namespace

TEST_CASE("boundary walk covers the rim once") {
  const Grid grid{6};
  const auto cells = grid.boundary_cells();
  CHECK(static_cast<long>(cells.size()) == 4 * 6 - 4);
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = i + 1; j < cells.size(); ++j)
      CHECK(cells[i] != cells[j]);
}

TEST_CASE("zero source gives the zero field") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel uniform{grid, Vector::Zero(grid.cells())};
  const Vector u = solver.solve(uniform, Vector::Zero(grid.cells()));
  CHECK(u.norm() == 0.0);
}

TEST_CASE("discrete operator is symmetric and conservative") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const Vector u = seeded_vector(grid.cells(), 3);
  const Vector v = seeded_vector(grid.cells(), 4);
  const double uv = v.dot(solver.apply_operator(model, u));
  const double vu = u.dot(solver.apply_operator(model, v));
  CHECK(std::abs(uv - vu) <= 1e-12 * std::abs(uv));
  // zero row sums: constants are in the nullspace
  CHECK(solver.apply_operator(model, Vector::Ones(grid.cells())).norm() <= 1e-12);
}

TEST_CASE("dipole solve satisfies the discrete system") {
  const Grid grid{16};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid, 1.0);
  const auto boundary = grid.boundary_cells();
  const Vector q = make_dipole(grid, boundary[0], boundary[20]);
  const Vector u = solver.solve(model, q);
  CHECK(std::abs(u.mean()) <= 1e-12);
  const double residual = (solver.apply_operator(model, u) + q).norm();
  CHECK(residual <= 1e-10 * q.norm());
}

TEST_CASE("incompatible sources are rejected") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel uniform{grid, Vector::Zero(grid.cells())};
  Vector q = Vector::Zero(grid.cells());
  q[0] = 1.0; // net charge
  CHECK_THROWS_AS(solver.solve(uniform, q), std::invalid_argument);
}

TEST_CASE("dipole field self-converges under refinement") {
  // same physical dipole and receiver on three nested grids
  auto receiver_value = [](long nx) {
    const Grid grid{nx};
    const ForwardSolver solver(grid);
    const ConductivityModel uniform{grid, Vector::Zero(grid.cells())};
    const long q1 = grid.index(nx / 4, 0);
    const long q2 = grid.index((3 * nx) / 4, nx - 1);
    const Vector u = solver.solve(uniform, make_dipole(grid, q1, q2));
    return u[grid.index(nx / 2, 0)];
  };
  const double u16 = receiver_value(16);
  const double u32 = receiver_value(32);
  const double u64 = receiver_value(64);
  const double coarse_gap = std::abs(u32 - u16);
  const double fine_gap = std::abs(u64 - u32);
  CHECK(fine_gap < coarse_gap);
  CHECK(coarse_gap / fine_gap > 1.2);
  CHECK(coarse_gap / fine_gap < 5.0);
}

TEST_CASE("prediction matches per-source solves and is linear in q") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const auto receivers = make_partial_boundary_receivers(grid);
  const auto boundary = grid.boundary_cells();

  SourceSet one;
  one.q = make_dipole(grid, boundary[1], boundary[9]);
  const Matrix f = predict(solver, model, one, receivers);
  CHECK((f.col(0) - receivers.extract(solver.solve(model, one.q.col(0)))).norm() <= 1e-12);

  SourceSet qa, qb, qsum;
  qa.q = make_dipole(grid, boundary[2], boundary[11]);
  qb.q = make_dipole(grid, boundary[5], boundary[17]);
  qsum.q = qa.q + qb.q;
  const Matrix fa = predict(solver, model, qa, receivers);
  const Matrix fb = predict(solver, model, qb, receivers);
  const Matrix fs = predict(solver, model, qsum, receivers);
  CHECK((fs - fa - fb).norm() <= 1e-9 * fs.norm());
}

TEST_CASE("twin data gives zero misfit and exact column perturbations") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const SourceSet sources = make_boundary_dipole_sources(grid, 6);
  const ReceiverSet receivers = make_partial_boundary_receivers(grid);
  const Matrix f = predict(solver, model, sources, receivers);

  DataSet twin{f, 0.0};
  CHECK(misfit(solver, model, twin, sources, receivers) <= 1e-18 * f.squaredNorm());

  // perturbing one data column by e moves the misfit by exactly ||e||^2
  const Vector e = seeded_vector(receivers.count(), 8);
  DataSet bumped{f, 0.0};
  bumped.d.col(2) += e;
  const double phi = misfit(solver, model, bumped, sources, receivers);
  CHECK(phi == doctest::Approx(e.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("noise level sets the expected misfit at the true model") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const SourceSet sources = make_boundary_dipole_sources(grid, 8);
  const ReceiverSet receivers = make_partial_boundary_receivers(grid);
  const Matrix clean = predict(solver, model, sources, receivers);
  const double sigma = 0.05;
  const double expected =
      sigma * sigma * static_cast<double>(clean.rows() * clean.cols());

  double mean = 0.0;
  const int draws = 100;
  for (int d = 0; d < draws; ++d) {
    const DataSet data = make_noisy_data(clean, sigma, 100 + static_cast<std::uint64_t>(d));
    mean += (clean - data.d).squaredNorm();
  }
  mean /= draws;
  CHECK(std::abs(mean - expected) <= 0.05 * expected);

  const DiscrepancyTarget target =
      DiscrepancyTarget::from_noise(sigma, clean.rows(), clean.cols());
  CHECK(target.rho == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("source combination reproduces the explicit weighted residual") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const SourceSet sources = make_boundary_dipole_sources(grid, 4);
  const ReceiverSet receivers = make_partial_boundary_receivers(grid);
  const Matrix f = predict(solver, model, sources, receivers);
  DataSet data = make_noisy_data(f, 0.1, 17);

  const std::uint64_t seed = 21;
  const Vector w =
      draw_probe(ProbeStream{ProbeDistribution::Rademacher, 4, seed}, 0);
  const double direct = ((f - data.d) * w).squaredNorm();
  const double combined = misfit_estimate(solver, model, data, sources, receivers,
                                          ProbeDistribution::Rademacher, 1, seed);
  CHECK(std::abs(combined - direct) <= 1e-9 * direct);
}

TEST_CASE("misfit estimate is unbiased") {
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const ConductivityModel wrong{grid, Vector::Zero(grid.cells())};
  const SourceSet sources = make_boundary_dipole_sources(grid, 8);
  const ReceiverSet receivers = make_partial_boundary_receivers(grid);
  const DataSet data =
      make_noisy_data(predict(solver, model, sources, receivers), 0.02, 3);
  const double exact = misfit(solver, wrong, data, sources, receivers);

  const long trials = 1000;
  std::vector<double> values(trials);
  double mean = 0.0;
  for (long t = 0; t < trials; ++t) {
    values[static_cast<std::size_t>(t)] =
        misfit_estimate(solver, wrong, data, sources, receivers,
                        ProbeDistribution::Rademacher, 2, mix_seed(40, t));
    mean += values[static_cast<std::size_t>(t)];
  }
  mean /= trials;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= (trials - 1);
  CHECK(std::abs(mean - exact) <= 3.0 * std::sqrt(var / trials));
}

TEST_CASE("orthogonal equal-norm residual columns estimate exactly") {
  // When F - D has orthogonal columns of equal norm, B^T B is a multiple
  // of the identity and the rademacher estimator has zero variance.
  const Grid grid{8};
  const ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const SourceSet sources = make_boundary_dipole_sources(grid, 4);
  const ReceiverSet receivers = make_partial_boundary_receivers(grid);
  const Matrix f = predict(solver, model, sources, receivers);

  Matrix c = Matrix::Zero(receivers.count(), 4);
  for (Index i = 0; i < 4; ++i) c(i, i) = 0.7;
  DataSet data{f - c, 0.0};
  const double phi = misfit(solver, model, data, sources, receivers);
  CHECK(phi == doctest::Approx(c.squaredNorm()).epsilon(1e-9));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double est = misfit_estimate(solver, model, data, sources, receivers,
                                       ProbeDistribution::Rademacher, 1, seed);
    CHECK(std::abs(est - phi) <= 0.02 * phi);
  }
}

TEST_CASE("solve accounting") {
  const Grid grid{8};
  ForwardSolver solver(grid);
  const ConductivityModel model = bumpy_model(grid);
  const SourceSet sources = make_boundary_dipole_sources(grid, 6);
  const ReceiverSet receivers = make_partial_boundary_receivers(grid);
  const DataSet data =
      make_noisy_data(predict(solver, model, sources, receivers), 0.02, 3);

  solver.reset_solve_count();
  (void)misfit(solver, model, data, sources, receivers);
  CHECK(solver.solve_count() == 6);

  solver.reset_solve_count();
  (void)misfit_estimate(solver, model, data, sources, receivers,
                        ProbeDistribution::Gaussian, 4, 9);
  CHECK(solver.solve_count() == 4);
}

TEST_CASE("noisy data is deterministic in the seed") {
  Matrix clean = Matrix::Ones(3, 4);
  const DataSet a = make_noisy_data(clean, 0.1, 5);
  const DataSet b = make_noisy_data(clean, 0.1, 5);
  CHECK((a.d - b.d).norm() == 0.0);
  CHECK((a.d - clean).norm() > 0.0);
}
