#ifndef IFD_LINALG_HPP_
#define IFD_LINALG_HPP_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ifd {

// Dense row-major n-by-n matrix. Sized for species counts, so n stays small
// (the subset enumeration elsewhere caps n at ~20).
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}
  Matrix(std::size_t n, std::initializer_list<double> row_major);

  static Matrix identity(std::size_t n);

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  std::span<const double> data() const { return a_; }

  // Exact comparison a_ij == a_ji, no tolerance.
  bool symmetric_as_stored() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

// LU factorization with partial pivoting.
class LuFactor {
 public:
  LuFactor() = default;
  explicit LuFactor(const Matrix& a);

  bool singular() const { return singular_; }
  double determinant() const;
  // Solves a x = b; throws std::domain_error on a singular factorization.
  void solve(std::span<const double> b, std::span<double> x) const;

 private:
  std::size_t n_ = 0;
  std::vector<double> lu_;
  std::vector<std::size_t> piv_;
  double det_sign_ = 1.0;
  bool singular_ = false;
};

double determinant(const Matrix& a);

struct EigenRange {
  double min = 0.0;
  double max = 0.0;
};

// Eigenvalue range of a symmetric matrix via cyclic Jacobi sweeps.
EigenRange symmetric_eigen_range(const Matrix& a);

namespace detail {
template <class F>
double pairwise_sum_impl(std::size_t lo, std::size_t hi, F&& f) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += f(i);
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum_impl(lo, mid, f) + pairwise_sum_impl(mid, hi, f);
}
}  // namespace detail

// Cascade summation of f(0), ..., f(n-1) with a fixed grouping, so every call
// over the same values reproduces the same bits.
template <class F>
double pairwise_sum(std::size_t n, F&& f) {
  if (n == 0) return 0.0;
  return detail::pairwise_sum_impl(0, n, f);
}

inline double pairwise_sum(std::span<const double> v) {
  return pairwise_sum(v.size(), [&](std::size_t i) { return v[i]; });
}

}  // namespace ifd

#endif  // IFD_LINALG_HPP_
