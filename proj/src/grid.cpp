#include "ifd/grid.hpp"

#include <cmath>
#include <stdexcept>

#include "ifd/linalg.hpp"

namespace ifd {

Grid::Grid(int dim, std::size_t nx, std::size_t ny, double hx, double hy)
    : dim_(dim), nx_(nx), ny_(ny), hx_(hx), hy_(hy) {}

Grid Grid::line(std::size_t cells, double length) {
  if (cells < 2) throw std::invalid_argument("Grid::line: need at least 2 cells");
  if (!(length > 0.0)) throw std::invalid_argument("Grid::line: length must be positive");
  return Grid(1, cells, 1, length / static_cast<double>(cells), 1.0);
}

Grid Grid::rect(std::size_t cells_x, std::size_t cells_y, double length_x, double length_y) {
  if (cells_x < 2 || cells_y < 2)
    throw std::invalid_argument("Grid::rect: need at least 2 cells per axis");
  if (!(length_x > 0.0) || !(length_y > 0.0))
    throw std::invalid_argument("Grid::rect: lengths must be positive");
  return Grid(2, cells_x, cells_y, length_x / static_cast<double>(cells_x),
              length_y / static_cast<double>(cells_y));
}

bool CellField::finite() const {
  for (double v : v_)
    if (!std::isfinite(v)) return false;
  return true;
}

double CellField::min_value() const {
  double m = v_.empty() ? 0.0 : v_[0];
  for (double v : v_) m = std::min(m, v);
  return m;
}

double CellField::max_value() const {
  double m = v_.empty() ? 0.0 : v_[0];
  for (double v : v_) m = std::max(m, v);
  return m;
}

namespace {

void require_cells(const Grid& g, const CellField& f, const char* where) {
  if (f.n_cells() != g.n_cells()) throw std::invalid_argument(std::string(where) + ": field/grid cell count mismatch");
}

void require_faces(const Grid& g, const FaceField& f, const char* where) {
  if (f.n_faces_x() != g.n_faces_x() || f.n_faces_y() != g.n_faces_y())
    throw std::invalid_argument(std::string(where) + ": face field/grid mismatch");
}

}  // namespace

FaceField face_gradient(const Grid& g, const CellField& phi) {
  require_cells(g, phi, "face_gradient");
  FaceField grad(g, phi.n_comp());
  const std::size_t nx = g.nx();
  const std::size_t ny = g.ny();
  for (std::size_t k = 0; k < phi.n_comp(); ++k) {
    const auto p = phi.comp(k);
    auto gx = grad.comp_x(k);
    for (std::size_t iy = 0; iy < ny; ++iy)
      for (std::size_t ix = 0; ix + 1 < nx; ++ix)
        gx[iy * (nx - 1) + ix] = (p[g.cell(ix + 1, iy)] - p[g.cell(ix, iy)]) / g.hx();
    if (g.dim() == 2) {
      auto gy = grad.comp_y(k);
      for (std::size_t iy = 0; iy + 1 < ny; ++iy)
        for (std::size_t ix = 0; ix < nx; ++ix)
          gy[iy * nx + ix] = (p[g.cell(ix, iy + 1)] - p[g.cell(ix, iy)]) / g.hy();
    }
  }
  return grad;
}

CellField cell_divergence(const Grid& g, const FaceField& flux) {
  require_faces(g, flux, "cell_divergence");
  CellField div(flux.n_comp(), g.n_cells());
  const std::size_t nx = g.nx();
  const std::size_t ny = g.ny();
  for (std::size_t k = 0; k < flux.n_comp(); ++k) {
    auto d = div.comp(k);
    const auto fx = flux.comp_x(k);
    for (std::size_t iy = 0; iy < ny; ++iy) {
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double east = ix + 1 < nx ? fx[iy * (nx - 1) + ix] : 0.0;
        const double west = ix > 0 ? fx[iy * (nx - 1) + ix - 1] : 0.0;
        d[g.cell(ix, iy)] = (east - west) / g.hx();
      }
    }
    if (g.dim() == 2) {
      const auto fy = flux.comp_y(k);
      for (std::size_t iy = 0; iy < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const double north = iy + 1 < ny ? fy[iy * nx + ix] : 0.0;
          const double south = iy > 0 ? fy[(iy - 1) * nx + ix] : 0.0;
          d[g.cell(ix, iy)] += (north - south) / g.hy();
        }
      }
    }
  }
  return div;
}

std::vector<double> integrate(const Grid& g, const CellField& phi) {
  require_cells(g, phi, "integrate");
  std::vector<double> out(phi.n_comp());
  for (std::size_t k = 0; k < phi.n_comp(); ++k)
    out[k] = g.cell_volume() * pairwise_sum(phi.comp(k));
  return out;
}

FaceField face_upwind(const Grid& g, const CellField& u, const FaceField& velocity) {
  require_cells(g, u, "face_upwind");
  require_faces(g, velocity, "face_upwind");
  if (u.n_comp() != velocity.n_comp())
    throw std::invalid_argument("face_upwind: component count mismatch");
  if (u.min_value() < 0.0) throw std::invalid_argument("face_upwind: negative density");

  FaceField flux(g, u.n_comp());
  const std::size_t nx = g.nx();
  const std::size_t ny = g.ny();
  for (std::size_t k = 0; k < u.n_comp(); ++k) {
    const auto uc = u.comp(k);
    const auto vx = velocity.comp_x(k);
    auto fx = flux.comp_x(k);
    for (std::size_t iy = 0; iy < ny; ++iy) {
      for (std::size_t ix = 0; ix + 1 < nx; ++ix) {
        const std::size_t f = iy * (nx - 1) + ix;
        const double v = vx[f];
        fx[f] = v * (v > 0.0 ? uc[g.cell(ix, iy)] : uc[g.cell(ix + 1, iy)]);
      }
    }
    if (g.dim() == 2) {
      const auto vy = velocity.comp_y(k);
      auto fy = flux.comp_y(k);
      for (std::size_t iy = 0; iy + 1 < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const std::size_t f = iy * nx + ix;
          const double v = vy[f];
          fy[f] = v * (v > 0.0 ? uc[g.cell(ix, iy)] : uc[g.cell(ix, iy + 1)]);
        }
      }
    }
  }
  return flux;
}

}  // namespace ifd
