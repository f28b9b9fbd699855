#ifndef IFD_FUNCTIONALS_HPP_
#define IFD_FUNCTIONALS_HPP_

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ifd/grid.hpp"
#include "ifd/problem.hpp"

namespace ifd {

// Internal cross-check failed (mutually equivalent formulas disagree beyond
// tolerance). Indicates a bug or badly conditioned data, not bad input shape.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Snapshot bookkeeping of the gradient-flow quantities.
struct FunctionalValues {
  double entropy = 0.0;
  double dissipation = 0.0;
  std::vector<double> masses;     // integral of u_i
  std::vector<double> boltzmann;  // H(u_i) = integral of (u log u - u + 1)
  double fitness_l2 = 0.0;        // integral of sum_i f_i^2
  double grad_u_l2 = 0.0;         // integral of |grad u|^2, summed over species
};

// E(u) = 1/2 int A(u - u_inf).(u - u_inf). Also evaluates the two equivalent
// forms 1/2 int A^{-1} f.f and 1/2 int (u_inf - u).f and requires three-way
// agreement to 1e-9 relative; disagreement throws ConsistencyError.
double entropy(const ProblemData& data, const Grid& grid, const CellField& u);

// D(u) = sum_i int u_i (|grad f_i|^2 + f_i^2), with the face value of u_i
// taken as the arithmetic mean of the adjacent cells. Requires u >= 0.
double dissipation(const ProblemData& data, const Grid& grid, const CellField& u);

// Boltzmann entropy per species, with the convention 0 log 0 = 0.
std::vector<double> boltzmann(const Grid& grid, const CellField& u);

// int sum f_i^2 / D(u), or nullopt when D is below the scale-aware floor
// (the 0/0 guard at the ideal free distribution).
std::optional<double> beckner_ratio(const ProblemData& data, const Grid& grid,
                                    const CellField& u);

// All snapshot functionals in one pass.
FunctionalValues evaluate_functionals(const ProblemData& data, const Grid& grid,
                                      const CellField& u);

// Variant for tight loops: reuses a precomputed ideal free distribution
// instead of re-solving A u_inf = m at every snapshot.
FunctionalValues evaluate_functionals(const ProblemData& data, const Grid& grid,
                                      const CellField& u, const CellField& u_inf);

// Trapezoid quadrature of t -> D(u(t)); along an exact flow this equals the
// entropy drop between the endpoints. Needs at least two samples.
double trajectory_action(std::span<const double> times, std::span<const double> dissipation);

}  // namespace ifd

#endif  // IFD_FUNCTIONALS_HPP_
