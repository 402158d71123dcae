#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "nmg/error.hpp"
#include "nmg/sparse.hpp"

namespace nmg {

/// Cholesky factor of an SPD matrix stored in band form.
///
/// With bandwidth equal to n-1 this is plain dense Cholesky; for the Galerkin
/// operators of structured hierarchies the band is O(sqrt n) wide.
class BandCholesky {
 public:
  BandCholesky() = default;

  explicit BandCholesky(const SparseMatrix& a) : n_(a.rows()) {
    require(a.rows() == a.cols(), ErrorKind::invalid_argument, "cholesky needs a square matrix");
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t c : a.row_cols(r)) band_ = std::max(band_, r > c ? r - c : c - r);
    }
    // Row r holds L(r, r-band .. r) at offsets 0..band.
    l_.assign(n_ * (band_ + 1), 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      const auto cols = a.row_cols(r);
      const auto vals = a.row_values(r);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] <= r) at(r, cols[k]) = vals[k];
      }
    }
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t j0 = j > band_ ? j - band_ : 0;
      double d = at(j, j);
      for (std::size_t k = j0; k < j; ++k) d -= at(j, k) * at(j, k);
      if (!(d > 0.0) || !std::isfinite(d))
        fail(ErrorKind::solver_failure, "coarse matrix is not positive definite");
      const double ljj = std::sqrt(d);
      at(j, j) = ljj;
      const std::size_t iend = std::min(n_, j + band_ + 1);
      for (std::size_t i = j + 1; i < iend; ++i) {
        const std::size_t i0 = i > band_ ? i - band_ : 0;
        double s = at(i, j);
        for (std::size_t k = std::max(i0, j0); k < j; ++k) s -= at(i, k) * at(j, k);
        at(i, j) = s / ljj;
      }
    }
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t bandwidth() const noexcept { return band_; }

  void solve_in_place(std::span<double> x) const {
    require(x.size() == n_, ErrorKind::invalid_argument, "cholesky solve size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t i0 = i > band_ ? i - band_ : 0;
      double s = x[i];
      for (std::size_t k = i0; k < i; ++k) s -= at(i, k) * x[k];
      x[i] = s / at(i, i);
    }
    for (std::size_t ii = n_; ii-- > 0;) {
      const std::size_t kend = std::min(n_, ii + band_ + 1);
      double s = x[ii];
      for (std::size_t k = ii + 1; k < kend; ++k) s -= at(k, ii) * x[k];
      x[ii] = s / at(ii, ii);
    }
  }

 private:
  double& at(std::size_t r, std::size_t c) { return l_[r * (band_ + 1) + (c + band_ - r)]; }
  double at(std::size_t r, std::size_t c) const { return l_[r * (band_ + 1) + (c + band_ - r)]; }

  std::size_t n_ = 0;
  std::size_t band_ = 0;
  std::vector<double> l_;
};

/// Conjugate gradients for SPD systems; returns iterations used or -1.
inline int conjugate_gradient(const SparseMatrix& a, std::span<const double> b, std::span<double> x,
                              double rel_tol, int max_iter) {
  const std::size_t n = b.size();
  Vector r(n), p(n), ap(n);
  a.multiply(x, r);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return 0;
  }
  p = r;
  double rr = dot(r, r);
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= rel_tol * bnorm) return it;
    a.multiply(p, ap);
    const double alpha = rr / dot(p, ap);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  return std::sqrt(rr) <= rel_tol * bnorm ? max_iter : -1;
}

}  // namespace nmg
