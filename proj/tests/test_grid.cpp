#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ifd/grid.hpp"
#include "ifd/linalg.hpp"

using namespace ifd;

namespace {

CellField random_cells(const Grid& g, std::size_t n_comp, std::mt19937_64& rng, double lo,
                       double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  CellField f(n_comp, g.n_cells());
  for (std::size_t k = 0; k < n_comp; ++k)
    for (double& v : f.comp(k)) v = dist(rng);
  return f;
}

FaceField random_faces(const Grid& g, std::size_t n_comp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  FaceField f(g, n_comp);
  for (std::size_t k = 0; k < n_comp; ++k) {
    for (double& v : f.comp_x(k)) v = dist(rng);
    for (double& v : f.comp_y(k)) v = dist(rng);
  }
  return f;
}

// Face-weighted inner product with cell-volume weights, the dual pairing of
// the adjointness identity.
double face_inner(const Grid& g, const FaceField& a, const FaceField& b) {
  double total = 0.0;
  for (std::size_t k = 0; k < a.n_comp(); ++k) {
    for (std::size_t f = 0; f < g.n_faces_x(); ++f) total += a.x(k, f) * b.x(k, f);
    for (std::size_t f = 0; f < g.n_faces_y(); ++f) total += a.y(k, f) * b.y(k, f);
  }
  return total * g.cell_volume();
}

}  // namespace

TEST_CASE("grid construction validates extents and spacing") {
  CHECK_THROWS_AS(Grid::line(1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid::line(8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(Grid::rect(4, 1, 1.0, 1.0), std::invalid_argument);
  const Grid g = Grid::rect(4, 8, 2.0, 1.0);
  CHECK(g.n_cells() == 32);
  CHECK(g.hx() == doctest::Approx(0.5));
  CHECK(g.hy() == doctest::Approx(0.125));
  CHECK(g.cell_volume() == doctest::Approx(0.0625));
}

TEST_CASE("face_gradient of a constant field vanishes") {
  const Grid g = Grid::line(16, 1.0);
  const CellField phi(2, g.n_cells(), 3.7);
  const FaceField grad = face_gradient(g, phi);
  for (std::size_t f = 0; f < g.n_faces_x(); ++f) {
    CHECK(grad.x(0, f) == 0.0);
    CHECK(grad.x(1, f) == 0.0);
  }
}

TEST_CASE("face_gradient of the coordinate field is exactly one") {
  // 10 cells of width 0.1: phi(x) = x at centers differs by h across faces
  const Grid g = Grid::line(10, 1.0);
  CellField phi(1, g.n_cells());
  for (std::size_t c = 0; c < g.n_cells(); ++c) phi(0, c) = g.center_x(c);
  const FaceField grad = face_gradient(g, phi);
  for (std::size_t f = 0; f < g.n_faces_x(); ++f)
    CHECK(grad.x(0, f) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("face_gradient of x + 2y in 2D") {
  const Grid g = Grid::rect(6, 5, 1.0, 1.0);
  CellField phi(1, g.n_cells());
  for (std::size_t c = 0; c < g.n_cells(); ++c) phi(0, c) = g.center_x(c) + 2.0 * g.center_y(c);
  const FaceField grad = face_gradient(g, phi);
  for (std::size_t f = 0; f < g.n_faces_x(); ++f)
    CHECK(grad.x(0, f) == doctest::Approx(1.0).epsilon(1e-13));
  for (std::size_t f = 0; f < g.n_faces_y(); ++f)
    CHECK(grad.y(0, f) == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("cell_divergence of zero flux is zero") {
  const Grid g = Grid::rect(4, 4, 1.0, 1.0);
  const FaceField flux(g, 1);
  const CellField div = cell_divergence(g, flux);
  for (std::size_t c = 0; c < g.n_cells(); ++c) CHECK(div(0, c) == 0.0);
}

TEST_CASE("no-flux conservation: divergence integrates to zero") {
  std::mt19937_64 rng(21u);
  for (const Grid& g : {Grid::line(33, 2.0), Grid::rect(9, 7, 1.5, 0.8)}) {
    for (int rep = 0; rep < 20; ++rep) {
      const FaceField flux = random_faces(g, 2, rng);
      const std::vector<double> total = integrate(g, cell_divergence(g, flux));
      for (double v : total) CHECK(std::fabs(v) <= 1e-13);
    }
  }
}

TEST_CASE("summation by parts: divergence and gradient are adjoint") {
  std::mt19937_64 rng(22u);
  for (const Grid& g : {Grid::line(24, 1.0), Grid::rect(8, 6, 1.0, 2.0)}) {
    for (int rep = 0; rep < 20; ++rep) {
      const CellField w = random_cells(g, 1, rng, -2.0, 2.0);
      const FaceField flux = random_faces(g, 1, rng);
      const CellField div = cell_divergence(g, flux);
      double lhs = 0.0;
      for (std::size_t c = 0; c < g.n_cells(); ++c) lhs += w(0, c) * div(0, c);
      lhs *= g.cell_volume();
      const double rhs = -face_inner(g, face_gradient(g, w), flux);
      CHECK(std::fabs(lhs - rhs) <= 1e-12 * std::max({1.0, std::fabs(lhs), std::fabs(rhs)}));
    }
  }
}

TEST_CASE("integrate: midpoint rule") {
  SUBCASE("constant one on the unit interval") {
    const Grid g = Grid::line(37, 1.0);
    const CellField phi(1, g.n_cells(), 1.0);
    CHECK(integrate(g, phi)[0] == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("constant c on a rectangle of volume V") {
    const Grid g = Grid::rect(11, 5, 2.0, 3.0);
    const CellField phi(1, g.n_cells(), 0.7);
    CHECK(integrate(g, phi)[0] == doctest::Approx(0.7 * 6.0).epsilon(1e-14));
  }
  SUBCASE("linear field is integrated exactly") {
    const Grid g = Grid::line(100, 1.0);
    CellField phi(1, g.n_cells());
    for (std::size_t c = 0; c < g.n_cells(); ++c) phi(0, c) = g.center_x(c);
    CHECK(integrate(g, phi)[0] == doctest::Approx(0.5).epsilon(1e-14));
  }
}

TEST_CASE("face_upwind picks the donor cell") {
  const Grid g = Grid::line(2, 1.0);
  CellField u(1, 2);
  u(0, 0) = 2.0;
  u(0, 1) = 5.0;
  FaceField v(g, 1);

  v.x(0, 0) = 1.0;
  CHECK(face_upwind(g, u, v).x(0, 0) == doctest::Approx(2.0));
  v.x(0, 0) = -1.0;
  CHECK(face_upwind(g, u, v).x(0, 0) == doctest::Approx(-5.0));
  v.x(0, 0) = 0.0;
  CHECK(face_upwind(g, u, v).x(0, 0) == 0.0);
}

TEST_CASE("face_upwind with constant density reduces to c * velocity") {
  std::mt19937_64 rng(23u);
  const Grid g = Grid::rect(5, 4, 1.0, 1.0);
  const FaceField v = random_faces(g, 1, rng);
  const CellField u(1, g.n_cells(), 1.3);
  const FaceField flux = face_upwind(g, u, v);
  for (std::size_t f = 0; f < g.n_faces_x(); ++f)
    CHECK(flux.x(0, f) == doctest::Approx(1.3 * v.x(0, f)));
  for (std::size_t f = 0; f < g.n_faces_y(); ++f)
    CHECK(flux.y(0, f) == doctest::Approx(1.3 * v.y(0, f)));
}

TEST_CASE("face_upwind rejects negative densities") {
  const Grid g = Grid::line(4, 1.0);
  CellField u(1, g.n_cells(), 1.0);
  u(0, 2) = -1e-9;
  const FaceField v(g, 1);
  CHECK_THROWS_AS(face_upwind(g, u, v), std::invalid_argument);
}

TEST_CASE("dimension mismatches are rejected") {
  const Grid g = Grid::line(8, 1.0);
  const CellField wrong(1, 9);
  CHECK_THROWS_AS(face_gradient(g, wrong), std::invalid_argument);
  const Grid other = Grid::line(9, 1.0);
  const FaceField flux(other, 1);
  CHECK_THROWS_AS(cell_divergence(g, flux), std::invalid_argument);
}

TEST_CASE("pairwise_sum matches plain summation") {
  std::mt19937_64 rng(24u);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(1234);
  long double exact = 0.0L;
  for (double& x : v) {
    x = dist(rng);
    exact += static_cast<long double>(x);
  }
  CHECK(pairwise_sum(v) == doctest::Approx(static_cast<double>(exact)).epsilon(1e-13));
}
