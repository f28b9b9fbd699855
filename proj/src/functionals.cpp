#include "ifd/functionals.hpp"

#include <cmath>
#include <string>

namespace ifd {

namespace {

void require_state(const ProblemData& data, const Grid& grid, const CellField& u,
                   const char* where) {
  if (u.n_comp() != data.n_species() || u.n_cells() != data.n_cells() ||
      grid.n_cells() != data.n_cells())
    throw std::invalid_argument(std::string(where) + ": state/grid/problem dimension mismatch");
}

void require_nonnegative(const CellField& u, const char* where) {
  if (u.min_value() < 0.0) throw std::invalid_argument(std::string(where) + ": negative density");
}

double entropy_quadratic(const ProblemData& data, const Grid& grid, const CellField& u,
                         const CellField& u_inf) {
  const std::size_t n = data.n_species();
  return 0.5 * grid.cell_volume() * pairwise_sum(data.n_cells(), [&](std::size_t c) {
           const Matrix& a = data.a(c);
           double q = 0.0;
           for (std::size_t i = 0; i < n; ++i) {
             const double di = u(i, c) - u_inf(i, c);
             for (std::size_t j = 0; j < n; ++j) q += a(i, j) * di * (u(j, c) - u_inf(j, c));
           }
           return q;
         });
}

double entropy_inverse_form(const ProblemData& data, const Grid& grid, const CellField& f) {
  const std::size_t n = data.n_species();
  std::vector<double> rhs(n), sol(n);
  return 0.5 * grid.cell_volume() * pairwise_sum(data.n_cells(), [&](std::size_t c) {
           for (std::size_t i = 0; i < n; ++i) rhs[i] = f(i, c);
           data.a_lu(c).solve(rhs, sol);
           double q = 0.0;
           for (std::size_t i = 0; i < n; ++i) q += sol[i] * rhs[i];
           return q;
         });
}

double entropy_duality_form(const ProblemData& data, const Grid& grid, const CellField& u,
                            const CellField& u_inf, const CellField& f) {
  const std::size_t n = data.n_species();
  return 0.5 * grid.cell_volume() * pairwise_sum(data.n_cells(), [&](std::size_t c) {
           double q = 0.0;
           for (std::size_t i = 0; i < n; ++i) q += (u_inf(i, c) - u(i, c)) * f(i, c);
           return q;
         });
}

// Dissipation density split: face-gradient part with arithmetic-mean weights
// plus the cellwise fitness part.
double dissipation_impl(const ProblemData& data, const Grid& grid, const CellField& u,
                        const CellField& f) {
  const std::size_t n = data.n_species();
  const FaceField grad_f = face_gradient(grid, f);
  const double vol = grid.cell_volume();
  const std::size_t nx = grid.nx();
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto uc = u.comp(k);
    const auto gx = grad_f.comp_x(k);
    total += vol * pairwise_sum(grid.n_faces_x(), [&](std::size_t fi) {
               const std::size_t iy = fi / (nx - 1);
               const std::size_t ix = fi % (nx - 1);
               const double mean = 0.5 * (uc[grid.cell(ix, iy)] + uc[grid.cell(ix + 1, iy)]);
               return mean * gx[fi] * gx[fi];
             });
    if (grid.dim() == 2) {
      const auto gy = grad_f.comp_y(k);
      total += vol * pairwise_sum(grid.n_faces_y(), [&](std::size_t fi) {
                 const std::size_t iy = fi / nx;
                 const std::size_t ix = fi % nx;
                 const double mean = 0.5 * (uc[grid.cell(ix, iy)] + uc[grid.cell(ix, iy + 1)]);
                 return mean * gy[fi] * gy[fi];
               });
    }
    const auto fc = f.comp(k);
    total += vol * pairwise_sum(grid.n_cells(),
                                [&](std::size_t c) { return uc[c] * fc[c] * fc[c]; });
  }
  return total;
}

double fitness_l2_impl(const Grid& grid, const CellField& f) {
  double total = 0.0;
  for (std::size_t k = 0; k < f.n_comp(); ++k) {
    const auto fc = f.comp(k);
    total += grid.cell_volume() *
             pairwise_sum(grid.n_cells(), [&](std::size_t c) { return fc[c] * fc[c]; });
  }
  return total;
}

double grad_l2_impl(const Grid& grid, const CellField& u) {
  const FaceField grad_u = face_gradient(grid, u);
  double total = 0.0;
  for (std::size_t k = 0; k < u.n_comp(); ++k) {
    const auto gx = grad_u.comp_x(k);
    total += grid.cell_volume() *
             pairwise_sum(gx.size(), [&](std::size_t f) { return gx[f] * gx[f]; });
    if (grid.dim() == 2) {
      const auto gy = grad_u.comp_y(k);
      total += grid.cell_volume() *
               pairwise_sum(gy.size(), [&](std::size_t f) { return gy[f] * gy[f]; });
    }
  }
  return total;
}

}  // namespace

namespace {

double entropy_checked(const ProblemData& data, const Grid& grid, const CellField& u,
                       const CellField& u_inf) {
  const CellField f = fitness(data, u);
  const double e_quad = entropy_quadratic(data, grid, u, u_inf);
  const double e_inv = entropy_inverse_form(data, grid, f);
  const double e_dual = entropy_duality_form(data, grid, u, u_inf, f);
  const double scale = std::max({std::fabs(e_quad), std::fabs(e_inv), std::fabs(e_dual)});
  const double tol = 1e-9 * (1.0 + scale);
  if (std::fabs(e_quad - e_inv) > tol || std::fabs(e_quad - e_dual) > tol ||
      std::fabs(e_inv - e_dual) > tol)
    throw ConsistencyError("entropy: equivalent forms disagree: " + std::to_string(e_quad) +
                           " / " + std::to_string(e_inv) + " / " + std::to_string(e_dual));
  return e_quad;
}

}  // namespace

double entropy(const ProblemData& data, const Grid& grid, const CellField& u) {
  require_state(data, grid, u, "entropy");
  return entropy_checked(data, grid, u, ideal_free_distribution(data));
}

double dissipation(const ProblemData& data, const Grid& grid, const CellField& u) {
  require_state(data, grid, u, "dissipation");
  require_nonnegative(u, "dissipation");
  return dissipation_impl(data, grid, u, fitness(data, u));
}

std::vector<double> boltzmann(const Grid& grid, const CellField& u) {
  if (u.n_cells() != grid.n_cells())
    throw std::invalid_argument("boltzmann: field/grid cell count mismatch");
  require_nonnegative(u, "boltzmann");
  std::vector<double> out(u.n_comp());
  for (std::size_t k = 0; k < u.n_comp(); ++k) {
    const auto uc = u.comp(k);
    out[k] = grid.cell_volume() * pairwise_sum(grid.n_cells(), [&](std::size_t c) {
               const double v = uc[c];
               return (v > 0.0 ? v * std::log(v) : 0.0) - v + 1.0;
             });
  }
  return out;
}

std::optional<double> beckner_ratio(const ProblemData& data, const Grid& grid,
                                    const CellField& u) {
  require_state(data, grid, u, "beckner_ratio");
  require_nonnegative(u, "beckner_ratio");
  const CellField f = fitness(data, u);
  const double num = fitness_l2_impl(grid, f);
  const double den = dissipation_impl(data, grid, u, f);
  const double floor = 1e-14 * (1.0 + num);
  if (den <= floor) return std::nullopt;
  return num / den;
}

FunctionalValues evaluate_functionals(const ProblemData& data, const Grid& grid,
                                      const CellField& u) {
  return evaluate_functionals(data, grid, u, ideal_free_distribution(data));
}

FunctionalValues evaluate_functionals(const ProblemData& data, const Grid& grid,
                                      const CellField& u, const CellField& u_inf) {
  require_state(data, grid, u, "evaluate_functionals");
  require_nonnegative(u, "evaluate_functionals");
  FunctionalValues v;
  v.entropy = entropy_checked(data, grid, u, u_inf);
  const CellField f = fitness(data, u);
  v.dissipation = dissipation_impl(data, grid, u, f);
  v.masses = integrate(grid, u);
  v.boltzmann = boltzmann(grid, u);
  v.fitness_l2 = fitness_l2_impl(grid, f);
  v.grad_u_l2 = grad_l2_impl(grid, u);
  return v;
}

double trajectory_action(std::span<const double> times, std::span<const double> dissipation) {
  if (times.size() != dissipation.size())
    throw std::invalid_argument("trajectory_action: times/values size mismatch");
  if (times.size() < 2)
    throw std::invalid_argument("trajectory_action: need at least two snapshots");
  return pairwise_sum(times.size() - 1, [&](std::size_t k) {
    return 0.5 * (times[k + 1] - times[k]) * (dissipation[k] + dissipation[k + 1]);
  });
}

}  // namespace ifd
