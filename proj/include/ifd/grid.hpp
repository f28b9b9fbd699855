#ifndef IFD_GRID_HPP_
#define IFD_GRID_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace ifd {

// Uniform cell-centered mesh on an interval (dim 1) or a rectangle (dim 2).
// All discrete operators below enforce zero flux across boundary faces.
class Grid {
 public:
  static Grid line(std::size_t cells, double length);
  static Grid rect(std::size_t cells_x, std::size_t cells_y, double length_x, double length_y);

  int dim() const { return dim_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t n_cells() const { return nx_ * ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  double cell_volume() const { return dim_ == 2 ? hx_ * hy_ : hx_; }
  double domain_volume() const { return cell_volume() * static_cast<double>(n_cells()); }
  // Largest spacing; the resolution scale used in tolerance models.
  double h_max() const { return dim_ == 2 && hy_ > hx_ ? hy_ : hx_; }

  std::size_t cell(std::size_t ix, std::size_t iy) const { return iy * nx_ + ix; }
  double center_x(std::size_t c) const { return (static_cast<double>(c % nx_) + 0.5) * hx_; }
  double center_y(std::size_t c) const { return (static_cast<double>(c / nx_) + 0.5) * hy_; }

  // Interior faces only. An x-face f = iy*(nx-1)+ix separates cell(ix,iy)
  // from cell(ix+1,iy); a y-face f = iy*nx+ix separates cell(ix,iy) from
  // cell(ix,iy+1).
  std::size_t n_faces_x() const { return (nx_ - 1) * ny_; }
  std::size_t n_faces_y() const { return dim_ == 2 ? nx_ * (ny_ - 1) : 0; }

 private:
  Grid(int dim, std::size_t nx, std::size_t ny, double hx, double hy);

  int dim_ = 1;
  std::size_t nx_ = 0;
  std::size_t ny_ = 1;
  double hx_ = 0.0;
  double hy_ = 1.0;
};

// One value per cell per component (a State is a CellField holding the N
// species densities).
class CellField {
 public:
  CellField() = default;
  CellField(std::size_t n_comp, std::size_t n_cells, double value = 0.0)
      : n_comp_(n_comp), n_cells_(n_cells), v_(n_comp * n_cells, value) {}

  std::size_t n_comp() const { return n_comp_; }
  std::size_t n_cells() const { return n_cells_; }

  double& operator()(std::size_t comp, std::size_t cell) { return v_[comp * n_cells_ + cell]; }
  double operator()(std::size_t comp, std::size_t cell) const { return v_[comp * n_cells_ + cell]; }

  std::span<double> comp(std::size_t k) { return {v_.data() + k * n_cells_, n_cells_}; }
  std::span<const double> comp(std::size_t k) const { return {v_.data() + k * n_cells_, n_cells_}; }
  std::span<const double> raw() const { return v_; }

  bool finite() const;
  double min_value() const;
  double max_value() const;

 private:
  std::size_t n_comp_ = 0;
  std::size_t n_cells_ = 0;
  std::vector<double> v_;
};

using State = CellField;

// Per-component values on interior faces; boundary faces carry an implicit
// zero normal flux and are never stored.
class FaceField {
 public:
  FaceField() = default;
  FaceField(const Grid& g, std::size_t n_comp)
      : n_comp_(n_comp),
        nfx_(g.n_faces_x()),
        nfy_(g.n_faces_y()),
        fx_(n_comp * nfx_, 0.0),
        fy_(n_comp * nfy_, 0.0) {}

  std::size_t n_comp() const { return n_comp_; }
  std::size_t n_faces_x() const { return nfx_; }
  std::size_t n_faces_y() const { return nfy_; }

  double& x(std::size_t comp, std::size_t face) { return fx_[comp * nfx_ + face]; }
  double x(std::size_t comp, std::size_t face) const { return fx_[comp * nfx_ + face]; }
  double& y(std::size_t comp, std::size_t face) { return fy_[comp * nfy_ + face]; }
  double y(std::size_t comp, std::size_t face) const { return fy_[comp * nfy_ + face]; }

  std::span<double> comp_x(std::size_t k) { return {fx_.data() + k * nfx_, nfx_}; }
  std::span<const double> comp_x(std::size_t k) const { return {fx_.data() + k * nfx_, nfx_}; }
  std::span<double> comp_y(std::size_t k) { return {fy_.data() + k * nfy_, nfy_}; }
  std::span<const double> comp_y(std::size_t k) const { return {fy_.data() + k * nfy_, nfy_}; }

 private:
  std::size_t n_comp_ = 0;
  std::size_t nfx_ = 0;
  std::size_t nfy_ = 0;
  std::vector<double> fx_;
  std::vector<double> fy_;
};

// Two-point difference (right - left)/h per interior face.
FaceField face_gradient(const Grid& g, const CellField& phi);

// Net outflow per cell divided by spacing; boundary faces contribute zero,
// so the field sums to zero over the domain (discrete no-flux conservation).
CellField cell_divergence(const Grid& g, const FaceField& flux);

// Midpoint quadrature, one value per component.
std::vector<double> integrate(const Grid& g, const CellField& phi);

// Donor-cell flux: velocity times the upwind cell value. Requires u >= 0.
FaceField face_upwind(const Grid& g, const CellField& u, const FaceField& velocity);

}  // namespace ifd

#endif  // IFD_GRID_HPP_
