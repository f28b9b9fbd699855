#include "ifd/problem.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "ifd/functionals.hpp"

namespace ifd {

namespace {

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t hash_doubles(std::span<const double> v, std::uint64_t seed) {
  return fnv1a64(v.data(), v.size() * sizeof(double), seed);
}

}  // namespace

ProblemData::ProblemData(Matrix a_constant, CellField m, double kappa_tol)
    : n_(a_constant.size()), m_(std::move(m)), kappa_tol_(kappa_tol) {
  a_.push_back(std::move(a_constant));
  validate();
}

ProblemData::ProblemData(std::vector<Matrix> a_per_cell, CellField m, double kappa_tol)
    : n_(a_per_cell.empty() ? 0 : a_per_cell[0].size()), a_(std::move(a_per_cell)),
      m_(std::move(m)), kappa_tol_(kappa_tol) {
  validate();
}

void ProblemData::validate() {
  if (n_ == 0) throw std::invalid_argument("ProblemData: empty interaction matrix");
  if (n_ > 32)
    throw std::invalid_argument("ProblemData: species count " + std::to_string(n_) +
                                " exceeds the supported maximum of 32");
  if (m_.n_comp() != n_)
    throw std::invalid_argument("ProblemData: m has " + std::to_string(m_.n_comp()) +
                                " components, expected " + std::to_string(n_));
  if (m_.n_cells() == 0) throw std::invalid_argument("ProblemData: empty resource field");
  if (!m_.finite()) throw std::invalid_argument("ProblemData: non-finite resource value");
  if (a_.size() != 1 && a_.size() != m_.n_cells())
    throw std::invalid_argument("ProblemData: A field must be constant or one matrix per cell");
  if (kappa_tol_ < 0.0) throw std::invalid_argument("ProblemData: kappa_tol must be >= 0");

  lambda_min_ = std::numeric_limits<double>::infinity();
  lambda_max_ = -std::numeric_limits<double>::infinity();
  lu_.reserve(a_.size());
  for (std::size_t c = 0; c < a_.size(); ++c) {
    const Matrix& mat = a_[c];
    if (mat.size() != n_)
      throw std::invalid_argument("ProblemData: A dimension differs at cell " + std::to_string(c));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if (mat(i, j) != mat(j, i))
          throw std::invalid_argument("ProblemData: A not symmetric at cell " + std::to_string(c) +
                                      ", entry (" + std::to_string(i + 1) + "," +
                                      std::to_string(j + 1) + ") != (" + std::to_string(j + 1) +
                                      "," + std::to_string(i + 1) + ")");
    const EigenRange eig = symmetric_eigen_range(mat);
    if (!(eig.min > 0.0))
      throw std::invalid_argument("ProblemData: A not positive definite at cell " +
                                  std::to_string(c) + " (smallest eigenvalue " +
                                  std::to_string(eig.min) + ")");
    lambda_min_ = std::min(lambda_min_, eig.min);
    lambda_max_ = std::max(lambda_max_, eig.max);
    lu_.emplace_back(mat);
  }
}

std::uint64_t ProblemData::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const std::uint64_t header[3] = {static_cast<std::uint64_t>(n_),
                                   static_cast<std::uint64_t>(n_cells()),
                                   static_cast<std::uint64_t>(a_.size())};
  h = fnv1a64(header, sizeof(header), h);
  for (const Matrix& mat : a_) h = hash_doubles(mat.data(), h);
  h = hash_doubles(m_.raw(), h);
  h = hash_doubles(std::span<const double>(&kappa_tol_, 1), h);
  return h;
}

ExtinctionPattern::ExtinctionPattern(std::size_t n_species, std::uint32_t extinct_mask)
    : n_(n_species), mask_(extinct_mask) {
  if (n_species == 0 || n_species > 32)
    throw std::invalid_argument("ExtinctionPattern: species count out of range");
  if (n_species < 32 && (extinct_mask >> n_species) != 0)
    throw std::invalid_argument("ExtinctionPattern: mask references species beyond N");
}

ExtinctionPattern ExtinctionPattern::all(std::size_t n_species) {
  return {n_species, n_species >= 32 ? ~0u : ((1u << n_species) - 1u)};
}

ExtinctionPattern ExtinctionPattern::of(std::size_t n_species,
                                        std::span<const std::size_t> extinct) {
  std::uint32_t mask = 0;
  for (std::size_t i : extinct) {
    if (i >= n_species) throw std::invalid_argument("ExtinctionPattern: index out of range");
    mask |= 1u << i;
  }
  return {n_species, mask};
}

std::size_t ExtinctionPattern::extinct_count() const { return std::popcount(mask_); }

std::vector<std::size_t> ExtinctionPattern::extinct_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_; ++i)
    if (extinct(i)) out.push_back(i);
  return out;
}

std::vector<std::size_t> ExtinctionPattern::survivor_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_; ++i)
    if (!extinct(i)) out.push_back(i);
  return out;
}

CellField fitness(const ProblemData& data, const CellField& u) {
  if (u.n_comp() != data.n_species() || u.n_cells() != data.n_cells())
    throw std::invalid_argument("fitness: state does not match problem dimensions");
  const std::size_t n = data.n_species();
  CellField f(n, data.n_cells());
  for (std::size_t c = 0; c < data.n_cells(); ++c) {
    const Matrix& a = data.a(c);
    for (std::size_t i = 0; i < n; ++i) {
      double au = 0.0;
      for (std::size_t j = 0; j < n; ++j) au += a(i, j) * u(j, c);
      f(i, c) = data.m_at(i, c) - au;
    }
  }
  return f;
}

CellField ideal_free_distribution(const ProblemData& data, double condition_cap) {
  const double cond = data.lambda_max() / data.lambda_min();
  if (!(cond <= condition_cap))
    throw StructuralViolation("ideal_free_distribution: condition number " +
                              std::to_string(cond) + " exceeds cap");
  const std::size_t n = data.n_species();
  CellField u(n, data.n_cells());
  std::vector<double> rhs(n), sol(n);
  for (std::size_t c = 0; c < data.n_cells(); ++c) {
    for (std::size_t i = 0; i < n; ++i) rhs[i] = data.m_at(i, c);
    data.a_lu(c).solve(rhs, sol);
    for (std::size_t i = 0; i < n; ++i) u(i, c) = sol[i];
  }
  return u;
}

namespace {

struct ExtinctionSolve {
  CellField state;
  double min_survivor;  // +inf when every species is extinct
};

ExtinctionSolve solve_extinction(const ProblemData& data, const ExtinctionPattern& pattern) {
  const std::size_t n = data.n_species();
  if (pattern.n_species() != n)
    throw std::invalid_argument("partial_extinction_state: pattern size mismatch");
  const std::vector<std::size_t> surv = pattern.survivor_indices();
  ExtinctionSolve out{CellField(n, data.n_cells()), std::numeric_limits<double>::infinity()};
  if (surv.empty()) return out;

  const std::size_t r = surv.size();
  Matrix sub(r);
  std::vector<double> rhs(r), sol(r);
  const bool const_a = data.constant_a();
  LuFactor cached;
  for (std::size_t c = 0; c < data.n_cells(); ++c) {
    if (!const_a || c == 0) {
      const Matrix& a = data.a(c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) sub(i, j) = a(surv[i], surv[j]);
      cached = LuFactor(sub);
      if (cached.singular())
        throw StructuralViolation("partial_extinction_state: restricted matrix singular at cell " +
                                  std::to_string(c));
    }
    for (std::size_t i = 0; i < r; ++i) rhs[i] = data.m_at(surv[i], c);
    cached.solve(rhs, sol);
    for (std::size_t i = 0; i < r; ++i) {
      out.state(surv[i], c) = sol[i];
      out.min_survivor = std::min(out.min_survivor, sol[i]);
    }
  }
  return out;
}

// Bordered matrix of the structural condition: rows I then j, columns A_{.,I}
// then m. For empty I this degenerates to the 1x1 matrix [m_j].
double bordered_determinant(const ProblemData& data, std::span<const std::size_t> subset,
                            std::size_t j, std::size_t cell) {
  const std::size_t r = subset.size();
  Matrix b(r + 1);
  const Matrix& a = data.a(cell);
  for (std::size_t row = 0; row < r; ++row) {
    for (std::size_t col = 0; col < r; ++col) b(row, col) = a(subset[row], subset[col]);
    b(row, r) = data.m_at(subset[row], cell);
  }
  for (std::size_t col = 0; col < r; ++col) b(r, col) = a(j, subset[col]);
  b(r, r) = data.m_at(j, cell);
  return determinant(b);
}

bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
  const std::size_t k = c.size();
  std::size_t i = k;
  while (i-- > 0) {
    if (c[i] < n - k + i) {
      ++c[i];
      for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

// Visits subsets of {0..n-1} by increasing cardinality, lexicographic within.
template <class Visit>
void for_each_subset_ordered(std::size_t n, std::size_t card_lo, std::size_t card_hi,
                             Visit&& visit) {
  std::vector<std::size_t> subset;
  for (std::size_t card = card_lo; card <= card_hi; ++card) {
    if (card == 0) {
      visit(std::span<const std::size_t>{});
      continue;
    }
    subset.resize(card);
    for (std::size_t i = 0; i < card; ++i) subset[i] = i;
    do {
      visit(std::span<const std::size_t>(subset));
    } while (next_combination(subset, n));
  }
}

}  // namespace

CellField partial_extinction_state(const ProblemData& data, const ExtinctionPattern& pattern) {
  ExtinctionSolve s = solve_extinction(data, pattern);
  if (s.min_survivor < 0.0)
    throw StructuralViolation(
        "partial_extinction_state: negative survivor component " +
        std::to_string(s.min_survivor) + " for extinct set mask " + std::to_string(pattern.mask()) +
        "; structural condition violated");
  return std::move(s.state);
}

Am4Report check_am4(const ProblemData& data, std::size_t enumeration_cap) {
  const std::size_t n = data.n_species();
  if (n > enumeration_cap)
    throw std::invalid_argument("check_am4: N=" + std::to_string(n) + " exceeds enumeration cap " +
                                std::to_string(enumeration_cap));
  Am4Report report;
  report.worst_subset = ExtinctionPattern::none(n);
  bool first = true;
  for_each_subset_ordered(n, 0, n - 1, [&](std::span<const std::size_t> subset) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::find(subset.begin(), subset.end(), j) != subset.end()) continue;
      for (std::size_t c = 0; c < data.n_cells(); ++c) {
        const double det = bordered_determinant(data, subset, j, c);
        ++report.determinants;
        if (first || det < report.kappa_hat) {
          first = false;
          report.kappa_hat = det;
          report.worst_subset = ExtinctionPattern::of(n, subset);
          report.worst_j = j;
          report.worst_cell = c;
        }
      }
    }
  });
  // Holds iff kappa_hat >= kappa_tol > 0.
  report.holds = data.kappa_tol() > 0.0 && report.kappa_hat >= data.kappa_tol();
  return report;
}

CriticalEntropy critical_entropy(const ProblemData& data, const Grid& grid,
                                 std::size_t enumeration_cap) {
  const std::size_t n = data.n_species();
  if (n > enumeration_cap)
    throw std::invalid_argument("critical_entropy: N=" + std::to_string(n) +
                                " exceeds enumeration cap " + std::to_string(enumeration_cap));
  if (grid.n_cells() != data.n_cells())
    throw std::invalid_argument("critical_entropy: grid/problem cell count mismatch");

  CriticalEntropy out;
  out.am4_flagged = !check_am4(data, enumeration_cap).holds;
  out.argmin = ExtinctionPattern::none(n);
  bool first = true;
  for_each_subset_ordered(n, 1, n, [&](std::span<const std::size_t> subset) {
    const ExtinctionPattern pattern = ExtinctionPattern::of(n, subset);
    const ExtinctionSolve s = solve_extinction(data, pattern);
    const double e = entropy(data, grid, s.state);
    if (first || e < out.e_star) {
      first = false;
      out.e_star = e;
      out.argmin = pattern;
    }
  });
  return out;
}

}  // namespace ifd
