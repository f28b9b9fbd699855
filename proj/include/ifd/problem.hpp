#ifndef IFD_PROBLEM_HPP_
#define IFD_PROBLEM_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ifd/grid.hpp"
#include "ifd/linalg.hpp"

namespace ifd {

// Data-level violation of the structural conditions (near-singular
// interaction matrix, negative survivor density, ...). Distinct from
// contract violations, which throw std::invalid_argument.
class StructuralViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problem coefficients: symmetric positive-definite interaction matrix field
// A(x) (a single constant matrix or one matrix per cell) and resource field
// m(x). Immutable after construction; construction validates symmetry,
// positive definiteness and dimensions.
class ProblemData {
 public:
  ProblemData(Matrix a_constant, CellField m, double kappa_tol = 1e-10);
  ProblemData(std::vector<Matrix> a_per_cell, CellField m, double kappa_tol = 1e-10);

  std::size_t n_species() const { return n_; }
  std::size_t n_cells() const { return m_.n_cells(); }
  bool constant_a() const { return a_.size() == 1; }

  const Matrix& a(std::size_t cell) const { return a_[constant_a() ? 0 : cell]; }
  const LuFactor& a_lu(std::size_t cell) const { return lu_[constant_a() ? 0 : cell]; }
  const CellField& m() const { return m_; }
  double m_at(std::size_t comp, std::size_t cell) const { return m_(comp, cell); }

  double kappa_tol() const { return kappa_tol_; }
  // Uniform ellipticity bounds over all cells.
  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }

  std::uint64_t fingerprint() const;

 private:
  void validate();

  std::size_t n_ = 0;
  std::vector<Matrix> a_;    // size 1 (constant) or n_cells
  std::vector<LuFactor> lu_; // same layout as a_
  CellField m_;
  double kappa_tol_ = 1e-10;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

// Partition of {0..N-1} into extinct and surviving species.
class ExtinctionPattern {
 public:
  ExtinctionPattern(std::size_t n_species, std::uint32_t extinct_mask);
  static ExtinctionPattern none(std::size_t n_species) { return {n_species, 0u}; }
  static ExtinctionPattern all(std::size_t n_species);
  static ExtinctionPattern of(std::size_t n_species, std::span<const std::size_t> extinct);

  std::size_t n_species() const { return n_; }
  std::uint32_t mask() const { return mask_; }
  bool extinct(std::size_t i) const { return (mask_ >> i) & 1u; }
  std::size_t extinct_count() const;
  std::vector<std::size_t> extinct_indices() const;
  std::vector<std::size_t> survivor_indices() const;

  bool operator==(const ExtinctionPattern&) const = default;

 private:
  std::size_t n_ = 0;
  std::uint32_t mask_ = 0;
};

// f = m - A u, evaluated cellwise.
CellField fitness(const ProblemData& data, const CellField& u);

// u_inf = A^{-1} m cellwise; the state with all fitnesses zero. Errors when
// the matrix condition number exceeds condition_cap.
CellField ideal_free_distribution(const ProblemData& data, double condition_cap = 1e12);

// Steady state with the species in `pattern` absent and survivors forming a
// lower-dimensional ideal free distribution: u_i = 0 on I, f_j = 0 off I.
// A negative survivor component is a structural-condition violation and
// throws; it is never returned silently.
CellField partial_extinction_state(const ProblemData& data, const ExtinctionPattern& pattern);

struct Am4Report {
  double kappa_hat = 0.0;        // minimum bordered determinant
  ExtinctionPattern worst_subset{1, 0};
  std::size_t worst_j = 0;
  std::size_t worst_cell = 0;
  bool holds = false;            // kappa_hat >= kappa_tol (> 0)
  std::size_t determinants = 0;  // number of (I, j, cell) evaluations
};

// Evaluates every bordered determinant
//   | A_{I,I}  m_I |
//   | A_{j,I}  m_j |
// over subsets I (by cardinality, then lexicographic), j not in I, and every
// cell, and reports the minimum with its deterministic argmin.
Am4Report check_am4(const ProblemData& data, std::size_t enumeration_cap = 20);

struct CriticalEntropy {
  double e_star = 0.0;
  ExtinctionPattern argmin{1, 0};
  bool am4_flagged = false;  // structural condition violated; values still reported
};

// Minimum entropy over the 2^N - 1 nonempty extinction patterns.
CriticalEntropy critical_entropy(const ProblemData& data, const Grid& grid,
                                 std::size_t enumeration_cap = 20);

}  // namespace ifd

#endif  // IFD_PROBLEM_HPP_
