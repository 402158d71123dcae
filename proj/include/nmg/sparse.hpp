#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nmg/error.hpp"
#include "nmg/text.hpp"

namespace nmg {

using Vector = std::vector<double>;

/// Entries with magnitude at or below this are never stored.
inline constexpr double kDropTolerance = 1e-15;

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Row-compressed real matrix with sorted, unique column indices per row.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Duplicates are summed; the summation order is the sorted (row, col,
  /// insertion) order, so the result does not depend on how the caller
  /// interleaved its contributions beyond that.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets,
                                    double drop = kDropTolerance) {
    for (const auto& t : triplets) {
      require(t.row < rows && t.col < cols, ErrorKind::out_of_range,
              "triplet index outside matrix shape");
    }
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    SparseMatrix m(rows, cols);
    std::size_t i = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      while (i < triplets.size() && triplets[i].row == r) {
        const std::size_t c = triplets[i].col;
        double sum = 0.0;
        while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c) {
          sum += triplets[i].value;
          ++i;
        }
        if (std::abs(sum) > drop) {
          m.cols_idx_.push_back(c);
          m.values_.push_back(sum);
        }
      }
      m.row_ptr_[r + 1] = m.cols_idx_.size();
    }
    return m;
  }

  Vector diagonal() const {
    Vector d(std::min(rows_, cols_), 0.0);
    for (std::size_t r = 0; r < d.size(); ++r) d[r] = (*this)(r, r);
    return d;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {cols_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  /// Entry lookup by binary search; absent entries read as zero.
  double operator()(std::size_t r, std::size_t c) const {
    const auto cols = row_cols(r);
    const auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return 0.0;
    return values_[row_ptr_[r] + static_cast<std::size_t>(it - cols.begin())];
  }

  double row_sum(std::size_t r) const {
    double s = 0.0;
    for (double v : row_values(r)) s += v;
    return s;
  }

  double diagonal(std::size_t r) const { return (*this)(r, r); }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        out.push_back({r, cols_idx_[k], values_[k]});
    }
    return out;
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    require(x.size() == cols_ && y.size() == rows_, ErrorKind::invalid_argument,
            "matrix-vector shape mismatch");
    for (std::size_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[cols_idx_[k]];
      y[r] = s;
    }
  }

  Vector operator*(std::span<const double> x) const {
    Vector y(rows_);
    multiply(x, y);
    return y;
  }

  /// y = A^T x
  void multiply_transpose(std::span<const double> x, std::span<double> y) const {
    require(x.size() == rows_ && y.size() == cols_, ErrorKind::invalid_argument,
            "transpose matrix-vector shape mismatch");
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) y[cols_idx_[k]] += values_[k] * x[r];
    }
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        t.push_back({cols_idx_[k], r, values_[k]});
    }
    return from_triplets(cols_, rows_, std::move(t), 0.0);
  }

  /// Sparse product with a dense accumulator per row; exact zeros from
  /// cancellation are dropped at the default tolerance.
  SparseMatrix operator*(const SparseMatrix& rhs) const {
    require(cols_ == rhs.rows_, ErrorKind::invalid_argument, "matrix product shape mismatch");
    SparseMatrix out(rows_, rhs.cols_);
    std::vector<double> acc(rhs.cols_, 0.0);
    std::vector<char> used(rhs.cols_, 0);
    std::vector<std::size_t> touched;
    for (std::size_t r = 0; r < rows_; ++r) {
      touched.clear();
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        const std::size_t mid = cols_idx_[k];
        const double a = values_[k];
        for (std::size_t q = rhs.row_ptr_[mid]; q < rhs.row_ptr_[mid + 1]; ++q) {
          const std::size_t c = rhs.cols_idx_[q];
          if (!used[c]) {
            used[c] = 1;
            touched.push_back(c);
          }
          acc[c] += a * rhs.values_[q];
        }
      }
      std::sort(touched.begin(), touched.end());
      for (std::size_t c : touched) {
        if (std::abs(acc[c]) > kDropTolerance) {
          out.cols_idx_.push_back(c);
          out.values_.push_back(acc[c]);
        }
        acc[c] = 0.0;
        used[c] = 0;
      }
      out.row_ptr_[r + 1] = out.cols_idx_.size();
    }
    return out;
  }

  /// Elementwise a*this + b*other.
  SparseMatrix combine(double a, const SparseMatrix& other, double b) const {
    require(rows_ == other.rows_ && cols_ == other.cols_, ErrorKind::invalid_argument,
            "matrix sum shape mismatch");
    auto t = triplets();
    for (auto& e : t) e.value *= a;
    for (auto e : other.triplets()) {
      e.value *= b;
      t.push_back(e);
    }
    return from_triplets(rows_, cols_, std::move(t));
  }

  /// Apply f(row, col, value) -> value to every stored entry, then re-drop.
  template <class F>
  SparseMatrix map(F&& f) const {
    auto t = triplets();
    for (auto& e : t) e.value = f(e.row, e.col, e.value);
    return from_triplets(rows_, cols_, std::move(t));
  }

  std::vector<std::vector<double>> to_dense() const {
    std::vector<std::vector<double>> d(rows_, std::vector<double>(cols_, 0.0));
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d[r][cols_idx_[k]] = values_[k];
    }
    return d;
  }

  double max_abs_diff(const SparseMatrix& other) const {
    require(rows_ == other.rows_ && cols_ == other.cols_, ErrorKind::invalid_argument,
            "matrix comparison shape mismatch");
    double worst = 0.0;
    for (const auto& e : combine(1.0, other, -1.0).triplets()) worst = std::max(worst, std::abs(e.value));
    return worst;
  }

  /// Matrix-market-like text: `rows cols nnz`, then one `i j v` per line (0-based).
  void write_text(std::ostream& os) const {
    os << rows_ << ' ' << cols_ << ' ' << nnz() << '\n';
    for (const auto& e : triplets()) os << e.row << ' ' << e.col << ' ' << format_real(e.value) << '\n';
  }

  static SparseMatrix read_text(std::istream& is) {
    std::size_t rows = 0, cols = 0, nnz = 0;
    if (!(is >> rows >> cols >> nnz)) fail(ErrorKind::parse_error, "sparse header: line 1");
    std::vector<Triplet> t;
    t.reserve(nnz);
    for (std::size_t k = 0; k < nnz; ++k) {
      std::size_t i = 0, j = 0;
      std::string v;
      if (!(is >> i >> j >> v))
        fail(ErrorKind::parse_error, "sparse entry: line " + std::to_string(k + 2));
      t.push_back({i, j, parse_real(v)});
    }
    return from_triplets(rows, cols, std::move(t), 0.0);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> cols_idx_;
  std::vector<double> values_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace nmg
