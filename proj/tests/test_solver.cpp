#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ifd/solver.hpp"

using namespace ifd;

namespace {

ProblemData two_species_instance(std::size_t cells) {
  return ProblemData(Matrix(2, {2.0, 1.0, 1.0, 2.0}), CellField(2, cells, 3.0));
}

Matrix random_spd(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> off(-1.0, 1.0);
  std::uniform_real_distribution<double> bump(0.1, 1.0);
  Matrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = off(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row += std::fabs(a(i, j));
    a(i, i) = row + bump(rng);
  }
  return a;
}

// Realized reaction rate recomputed independently of the solver internals.
double realized_reaction(const SolverConfig& cfg, double u, double u_next, double f) {
  const double ut = std::min(u, cfg.truncation_m);
  if (cfg.reaction_scheme == ReactionScheme::explicit_euler) return ut * f;
  const double rate = std::max(-f, 0.0) * (u > ut ? ut / u : 1.0);
  return ut * std::max(f, 0.0) - u_next * rate;
}

}  // namespace

TEST_CASE("step: the ideal free distribution is an exact fixed point") {
  const std::size_t cells = 64;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  const State u_inf = ideal_free_distribution(data);
  SolverConfig cfg;
  const State next = step(data, grid, u_inf, cfg, 0.25);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t c = 0; c < cells; ++c) CHECK(next(k, c) == u_inf(k, c));
}

TEST_CASE("step: spatially constant state reduces to one Euler step of u f") {
  const std::size_t cells = 16;
  const Grid grid = Grid::line(cells, 1.0);

  SUBCASE("logistic example: 0.5 -> 0.525 at dt = 0.1") {
    const ProblemData data(Matrix(1, {1.0}), CellField(1, cells, 1.0));
    SolverConfig cfg;
    const State next = step(data, grid, State(1, cells, 0.5), cfg, 0.1);
    for (std::size_t c = 0; c < cells; ++c)
      CHECK(next(0, c) == doctest::Approx(0.525).epsilon(1e-15));
  }
  SUBCASE("two species with a decaying component") {
    const ProblemData data = two_species_instance(cells);
    State u(2, cells);
    for (std::size_t c = 0; c < cells; ++c) {
      u(0, c) = 0.5;
      u(1, c) = 2.0;
    }
    // f = (0, -1.5), so u' = (0.5, 2 - 3 dt)
    SolverConfig cfg;
    const State next = step(data, grid, u, cfg, 0.01);
    for (std::size_t c = 0; c < cells; ++c) {
      CHECK(next(0, c) == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(next(1, c) == doctest::Approx(1.97).epsilon(1e-14));
    }
  }
  SUBCASE("patankar keeps a strongly decaying state positive at any dt") {
    const ProblemData data(Matrix(1, {1.0}), CellField(1, cells, 0.2));
    SolverConfig cfg;
    cfg.reaction_scheme = ReactionScheme::patankar;
    // f = 0.2 - 1 = -0.8; u' = 1 / (1 + 0.8 dt)
    const State next = step(data, grid, State(1, cells, 1.0), cfg, 10.0);
    for (std::size_t c = 0; c < cells; ++c)
      CHECK(next(0, c) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  }
}

TEST_CASE("step resolves dt from the config") {
  const std::size_t cells = 16;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  const State u(2, cells, 0.5);
  SUBCASE("fixed dt matches the explicit-dt overload") {
    SolverConfig cfg;
    cfg.dt = 1e-4;
    const State a = step(data, grid, u, cfg);
    const State b = step(data, grid, u, cfg, 1e-4);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t c = 0; c < cells; ++c) CHECK(a(k, c) == b(k, c));
  }
  SUBCASE("auto dt steps at the stability bound") {
    SolverConfig cfg;
    const double bound = stability_bound(data, grid, u, cfg);
    REQUIRE(std::isfinite(bound));
    const State a = step(data, grid, u, cfg);
    const State b = step(data, grid, u, cfg, bound);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t c = 0; c < cells; ++c) CHECK(a(k, c) == b(k, c));
  }
}

TEST_CASE("step rejects bad input") {
  const Grid grid = Grid::line(8, 1.0);
  const ProblemData data = two_species_instance(8);
  SolverConfig cfg;
  SUBCASE("negative density") {
    State u(2, 8, 1.0);
    u(1, 3) = -1e-6;
    CHECK_THROWS_AS(step(data, grid, u, cfg, 0.01), SolverError);
  }
  SUBCASE("non-finite density") {
    State u(2, 8, 1.0);
    u(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(step(data, grid, u, cfg, 0.01), SolverError);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(step(data, grid, State(1, 8, 1.0), cfg, 0.01), std::invalid_argument);
  }
}

TEST_CASE("stability_bound") {
  const std::size_t cells = 32;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  const State u_inf = ideal_free_distribution(data);

  SUBCASE("at the ideal free distribution only the parabolic term is active") {
    // advective and reaction terms vanish (f = 0); what remains is the
    // cross-diffusion von-Neumann rate 2 Lambda_A max(u) / h^2
    SolverConfig cfg;
    const double expected =
        0.45 * grid.hx() * grid.hx() / (2.0 * data.lambda_max() * u_inf.max_value());
    CHECK(stability_bound(data, grid, u_inf, cfg) == doctest::Approx(expected).epsilon(1e-13));
  }
  SUBCASE("infinite only when every rate vanishes (the all-extinct state)") {
    SolverConfig cfg;
    CHECK(std::isinf(stability_bound(data, grid, State(2, cells, 0.0), cfg)));
  }
  SUBCASE("diffusion adds 2 delta / h^2 to the rate") {
    SolverConfig cfg;
    cfg.delta = 0.01;
    cfg.cfl_safety = 0.45;
    const double expected = 0.45 * grid.hx() * grid.hx() /
                            (2.0 * (cfg.delta + data.lambda_max() * u_inf.max_value()));
    CHECK(stability_bound(data, grid, u_inf, cfg) == doctest::Approx(expected).epsilon(1e-13));
  }
  SUBCASE("stepping at the bound preserves positivity on random states") {
    std::mt19937_64 rng(51u);
    std::uniform_real_distribution<double> udist(0.0, 3.0);
    std::uniform_real_distribution<double> mdist(-0.5, 3.0);
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t n = 1 + rng() % 3;
      const std::size_t nc = 16;
      Matrix a = random_spd(n, rng);
      CellField m(n, nc);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t c = 0; c < nc; ++c) m(k, c) = mdist(rng);
      const ProblemData pd(std::move(a), std::move(m));
      const Grid g = Grid::line(nc, 1.0);
      State u(n, nc);
      for (std::size_t k = 0; k < n; ++k)
        for (double& v : u.comp(k)) v = udist(rng);
      SolverConfig cfg;
      cfg.delta = (rep % 3 == 0) ? 1e-3 : 0.0;
      const double dt = stability_bound(pd, g, u, cfg);
      if (std::isinf(dt)) continue;
      const State next = step(pd, g, u, cfg, dt);
      CHECK(next.min_value() >= 0.0);
    }
  }
}

TEST_CASE("run: stationary states stay put to the bit") {
  const std::size_t cells = 32;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  SolverConfig cfg;
  cfg.t_end = 5.0;
  cfg.dt = 0.05;
  cfg.snapshot_stride = 10;

  const std::size_t extinct1[] = {0};
  const State starts[] = {
      ideal_free_distribution(data),
      partial_extinction_state(data, ExtinctionPattern::of(2, extinct1)),
      partial_extinction_state(data, ExtinctionPattern::all(2)),
  };
  for (const State& u0 : starts) {
    const Trajectory tr = run(data, grid, u0, cfg);
    REQUIRE(tr.times.size() >= 2);
    CHECK(tr.times.front() == 0.0);
    CHECK(tr.times.back() == doctest::Approx(5.0));
    for (const State& s : tr.states)
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t c = 0; c < cells; ++c) CHECK(s(k, c) == u0(k, c));
    // entropy and dissipation stay frozen too
    for (const FunctionalValues& v : tr.functionals) {
      CHECK(v.entropy == doctest::Approx(tr.functionals.front().entropy));
      CHECK(v.dissipation == doctest::Approx(tr.functionals.front().dissipation));
    }
  }
}

TEST_CASE("run: snapshot cadence and strictly increasing times") {
  const std::size_t cells = 16;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  State u0(2, cells, 0.5);
  SolverConfig cfg;
  cfg.t_end = 0.1;
  cfg.dt = 0.001;
  cfg.snapshot_stride = 7;
  const Trajectory tr = run(data, grid, u0, cfg);
  for (std::size_t k = 0; k + 1 < tr.times.size(); ++k) CHECK(tr.times[k] < tr.times[k + 1]);
  CHECK(tr.times.back() == doctest::Approx(0.1).epsilon(1e-12));
  // 100 steps, stride 7 -> snapshots at steps 0,7,...,98 plus the final step
  CHECK(tr.times.size() == 16);
  for (const State& s : tr.states) CHECK(s.min_value() >= 0.0);
}

TEST_CASE("run: fixed dt beyond the stability bound is an error") {
  const std::size_t cells = 16;
  const Grid grid = Grid::line(cells, 1.0);
  // strongly negative fitness: f = 0.1 - u = -0.9 at u = 1
  const ProblemData data(Matrix(1, {1.0}), CellField(1, cells, 0.1));
  SolverConfig cfg;
  cfg.t_end = 10.0;
  cfg.dt = 5.0;  // bound is cfl/0.9 ~ 0.5
  CHECK_THROWS_AS(run(data, grid, State(1, cells, 1.0), cfg), SolverError);
}

TEST_CASE("discrete mass identity holds to roundoff for both schemes") {
  std::mt19937_64 rng(52u);
  std::uniform_real_distribution<double> udist(0.0, 2.0);
  const std::size_t cells = 32;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);

  for (ReactionScheme scheme : {ReactionScheme::explicit_euler, ReactionScheme::patankar}) {
    SolverConfig cfg;
    cfg.reaction_scheme = scheme;
    for (int rep = 0; rep < 50; ++rep) {
      State u(2, cells);
      for (std::size_t k = 0; k < 2; ++k)
        for (double& v : u.comp(k)) v = udist(rng);
      const double dt = 0.5 * stability_bound(data, grid, u, cfg);
      if (!std::isfinite(dt)) continue;
      const State next = step(data, grid, u, cfg, dt);
      const CellField f = fitness(data, u);
      for (std::size_t k = 0; k < 2; ++k) {
        const double mass0 = integrate(grid, u)[k];
        const double mass1 = integrate(grid, next)[k];
        double gain = 0.0;
        for (std::size_t c = 0; c < cells; ++c)
          gain += realized_reaction(cfg, u(k, c), next(k, c), f(k, c));
        gain *= grid.cell_volume();
        const double residual = std::fabs(mass1 - mass0 - dt * gain);
        CHECK(residual <= 1e-12 * (1.0 + std::fabs(mass0) + std::fabs(mass1)));
      }
    }
  }
}

TEST_CASE("run with mass audit reports a roundoff-level residual") {
  const std::size_t cells = 24;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  State u0(2, cells);
  for (std::size_t c = 0; c < cells; ++c) {
    u0(0, c) = 0.4 + 0.2 * std::sin(6.28 * grid.center_x(c));
    u0(1, c) = 0.6;
  }
  SolverConfig cfg;
  cfg.t_end = 0.5;
  cfg.audit_mass = true;
  const Trajectory tr = run(data, grid, u0, cfg);
  CHECK(tr.max_mass_residual <= 1e-12);
}

TEST_CASE("M truncation above the solution range is bit-neutral") {
  const std::size_t cells = 32;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  State u0(2, cells);
  for (std::size_t c = 0; c < cells; ++c) {
    u0(0, c) = 0.5 + 0.3 * std::cos(6.28 * grid.center_x(c));
    u0(1, c) = 0.5;
  }
  SolverConfig cfg;
  cfg.t_end = 1.0;
  cfg.snapshot_stride = 50;

  SolverConfig capped = cfg;
  capped.truncation_m = 10.0 * u0.max_value();
  const Trajectory a = run(data, grid, u0, cfg);
  const Trajectory b = run(data, grid, u0, capped);
  REQUIRE(a.times.size() == b.times.size());
  for (std::size_t s = 0; s < a.states.size(); ++s)
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t c = 0; c < cells; ++c) CHECK(a.states[s](k, c) == b.states[s](k, c));
}

TEST_CASE("a binding M cap changes the transient") {
  const std::size_t cells = 16;
  const Grid grid = Grid::line(cells, 1.0);
  const ProblemData data = two_species_instance(cells);
  State u0(2, cells, 2.5);  // above u_inf = (1,1), decays through the cap
  SolverConfig cfg;
  cfg.t_end = 0.2;
  SolverConfig capped = cfg;
  capped.truncation_m = 1.5;
  const State a = run(data, grid, u0, cfg).states.back();
  const State b = run(data, grid, u0, capped).states.back();
  double diff = 0.0;
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t c = 0; c < cells; ++c) diff = std::max(diff, std::fabs(a(k, c) - b(k, c)));
  CHECK(diff > 1e-6);
}

TEST_CASE("2D: the ideal free distribution stays put and EDI holds") {
  const Grid grid = Grid::rect(12, 10, 1.0, 1.0);
  Matrix a(2, {2.0, 1.0, 1.0, 2.0});
  CellField m(2, grid.n_cells());
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    m(0, c) = 3.0 + 0.5 * std::sin(6.28 * grid.center_x(c));
    m(1, c) = 3.0 + 0.5 * std::cos(6.28 * grid.center_y(c));
  }
  const ProblemData data(std::move(a), std::move(m));

  SolverConfig cfg;
  cfg.t_end = 0.5;
  cfg.snapshot_stride = 50;
  cfg.audit_mass = true;

  SUBCASE("stationarity at u_inf") {
    const State u_inf = ideal_free_distribution(data);
    REQUIRE(u_inf.min_value() > 0.0);
    const Trajectory tr = run(data, grid, u_inf, cfg);
    for (const State& s : tr.states)
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t c = 0; c < grid.n_cells(); ++c) CHECK(s(k, c) == u_inf(k, c));
  }
  SUBCASE("entropy decay, positivity and the mass identity on a transient") {
    const Trajectory tr = run(data, grid, State(2, grid.n_cells(), 0.8), cfg);
    CHECK(tr.max_mass_residual <= 1e-12);
    const double h2 = grid.h_max() * grid.h_max();
    for (std::size_t k = 0; k + 1 < tr.times.size(); ++k) {
      const double tol = 10.0 * (tr.max_step_dt[k + 1] + h2) * (1.0 + tr.functionals[k].entropy);
      CHECK(tr.functionals[k + 1].entropy <= tr.functionals[k].entropy + tol);
    }
    for (const State& s : tr.states) CHECK(s.min_value() >= 0.0);
    CHECK(tr.functionals.back().entropy < tr.functionals.front().entropy);
  }
}

TEST_CASE("2D run with y-independent data reproduces the 1D run bitwise") {
  const std::size_t nx = 16;
  const Grid g1 = Grid::line(nx, 1.0);
  const Grid g2 = Grid::rect(nx, 6, 1.0, 1.0);
  Matrix a(2, {2.0, 1.0, 1.0, 2.0});

  auto make_m = [&](const Grid& g) {
    CellField m(2, g.n_cells());
    for (std::size_t c = 0; c < g.n_cells(); ++c) {
      m(0, c) = 3.0 + std::sin(6.28 * g.center_x(c));
      m(1, c) = 3.0 - 0.5 * std::sin(6.28 * g.center_x(c));
    }
    return m;
  };
  const ProblemData d1(a, make_m(g1));
  const ProblemData d2(a, make_m(g2));

  auto make_u0 = [&](const Grid& g) {
    State u(2, g.n_cells());
    for (std::size_t c = 0; c < g.n_cells(); ++c) {
      u(0, c) = 0.5 + 0.25 * std::cos(6.28 * g.center_x(c));
      u(1, c) = 0.75;
    }
    return u;
  };

  SolverConfig cfg;
  cfg.dt = 1e-4;
  cfg.t_end = 0.01;  // 100 identical fixed steps on both grids
  const State end1 = run(d1, g1, make_u0(g1), cfg).states.back();
  const State end2 = run(d2, g2, make_u0(g2), cfg).states.back();
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t iy = 0; iy < g2.ny(); ++iy)
      for (std::size_t ix = 0; ix < nx; ++ix)
        CHECK(end2(k, g2.cell(ix, iy)) == end1(k, ix));
}

TEST_CASE("entropy decays along a heterogeneous run") {
  const std::size_t cells = 48;
  const Grid grid = Grid::line(cells, 1.0);
  Matrix a(2, {2.0, 1.0, 1.0, 2.0});
  CellField m(2, cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const double x = grid.center_x(c);
    m(0, c) = 3.0 + std::sin(2.0 * 3.14159265358979 * x);
    m(1, c) = 3.0 + std::cos(2.0 * 3.14159265358979 * x);
  }
  const ProblemData data(std::move(a), std::move(m));
  SolverConfig cfg;
  cfg.t_end = 2.0;
  cfg.snapshot_stride = 25;
  const Trajectory tr = run(data, grid, State(2, cells, 0.5), cfg);
  const double h2 = grid.hx() * grid.hx();
  for (std::size_t k = 0; k + 1 < tr.times.size(); ++k) {
    const double tol = 10.0 * (tr.max_step_dt[k + 1] + h2) * (1.0 + tr.functionals[k].entropy);
    CHECK(tr.functionals[k + 1].entropy <= tr.functionals[k].entropy + tol);
  }
  CHECK(tr.functionals.back().entropy < 0.5 * tr.functionals.front().entropy);
}
