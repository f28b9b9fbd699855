#include "ifd/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace ifd {

Matrix::Matrix(std::size_t n, std::initializer_list<double> row_major)
    : n_(n), a_(row_major) {
  if (a_.size() != n * n) throw std::invalid_argument("Matrix: initializer size != n*n");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::symmetric_as_stored() const {
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if ((*this)(i, j) != (*this)(j, i)) return false;
  return true;
}

LuFactor::LuFactor(const Matrix& a)
    : n_(a.size()), lu_(a.data().begin(), a.data().end()), piv_(n_) {
  for (std::size_t i = 0; i < n_; ++i) piv_[i] = i;
  for (std::size_t k = 0; k < n_; ++k) {
    std::size_t p = k;
    double best = std::fabs(lu_[k * n_ + k]);
    for (std::size_t i = k + 1; i < n_; ++i) {
      const double v = std::fabs(lu_[i * n_ + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best == 0.0) {
      singular_ = true;
      continue;
    }
    if (p != k) {
      for (std::size_t j = 0; j < n_; ++j) std::swap(lu_[p * n_ + j], lu_[k * n_ + j]);
      std::swap(piv_[p], piv_[k]);
      det_sign_ = -det_sign_;
    }
    const double pivot = lu_[k * n_ + k];
    for (std::size_t i = k + 1; i < n_; ++i) {
      const double factor = lu_[i * n_ + k] / pivot;
      lu_[i * n_ + k] = factor;
      for (std::size_t j = k + 1; j < n_; ++j) lu_[i * n_ + j] -= factor * lu_[k * n_ + j];
    }
  }
}

double LuFactor::determinant() const {
  if (n_ == 0) return 1.0;
  if (singular_) return 0.0;
  double d = det_sign_;
  for (std::size_t k = 0; k < n_; ++k) d *= lu_[k * n_ + k];
  return d;
}

void LuFactor::solve(std::span<const double> b, std::span<double> x) const {
  if (singular_) throw std::domain_error("LuFactor::solve: singular matrix");
  if (b.size() != n_ || x.size() != n_)
    throw std::invalid_argument("LuFactor::solve: dimension mismatch");
  // forward substitution on the permuted right-hand side
  for (std::size_t i = 0; i < n_; ++i) {
    double s = b[piv_[i]];
    for (std::size_t j = 0; j < i; ++j) s -= lu_[i * n_ + j] * x[j];
    x[i] = s;
  }
  for (std::size_t ii = n_; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t j = ii + 1; j < n_; ++j) s -= lu_[ii * n_ + j] * x[j];
    x[ii] = s / lu_[ii * n_ + ii];
  }
}

double determinant(const Matrix& a) { return LuFactor(a).determinant(); }

EigenRange symmetric_eigen_range(const Matrix& a) {
  const std::size_t n = a.size();
  if (n == 0) return {};
  std::vector<double> w(a.data().begin(), a.data().end());
  auto at = [&](std::size_t i, std::size_t j) -> double& { return w[i * n + j]; };

  double norm2 = 0.0;
  for (double v : w) norm2 += v * v;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off2 += 2.0 * at(i, j) * at(i, j);
    if (off2 <= 1e-30 * (norm2 + 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p);
          const double akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k);
          const double aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }

  EigenRange r{at(0, 0), at(0, 0)};
  for (std::size_t i = 1; i < n; ++i) {
    r.min = std::min(r.min, at(i, i));
    r.max = std::max(r.max, at(i, i));
  }
  return r;
}

}  // namespace ifd
