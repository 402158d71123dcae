#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "nmg/dense.hpp"
#include "nmg/sparse.hpp"

using namespace nmg;

TEST(Sparse, TripletsAreSummedSortedAndDropped) {
  auto m = SparseMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 2, 3.0}, {0, 0, 1e-17}});
  EXPECT_EQ(m.nnz(), 2u);
  EXPECT_DOUBLE_EQ(m(1, 2), 4.0);
  EXPECT_DOUBLE_EQ(m(0, 1), 2.0);
  EXPECT_EQ(m(0, 0), 0.0);
  EXPECT_THROW(SparseMatrix::from_triplets(1, 1, {{1, 0, 1.0}}), Error);
}

TEST(Sparse, ProductAndTransposeMatchDense) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Triplet> ta, tb;
  for (int k = 0; k < 30; ++k) {
    ta.push_back({rng() % 6, rng() % 5, u(rng)});
    tb.push_back({rng() % 5, rng() % 4, u(rng)});
  }
  const auto a = SparseMatrix::from_triplets(6, 5, ta);
  const auto b = SparseMatrix::from_triplets(5, 4, tb);
  const auto c = a * b;
  const auto da = a.to_dense(), db = b.to_dense();
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += da[i][k] * db[k][j];
      EXPECT_NEAR(c(i, j), s, 1e-14);
    }
  }
  const auto at = a.transpose();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(at(j, i), a(i, j));

  Vector x{1, 2, 3, 4, 5, 6}, y(5), z(5);
  a.multiply_transpose(x, y);
  at.multiply(x, z);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(y[j], z[j], 1e-14);
}

TEST(Sparse, TextExportRoundTrip) {
  const auto m = SparseMatrix::from_triplets(3, 2, {{0, 0, 1.0 / 3.0}, {2, 1, -2.5e-7}});
  std::stringstream ss;
  m.write_text(ss);
  EXPECT_EQ(ss.str().substr(0, 6), "3 2 2\n");
  const auto back = SparseMatrix::read_text(ss);
  EXPECT_EQ(back.max_abs_diff(m), 0.0);

  std::stringstream bad("3 2 2\n0 0 1\n");
  EXPECT_THROW(SparseMatrix::read_text(bad), Error);
}

TEST(Dense, BandCholeskySolvesSpdSystem) {
  // 1D Laplacian plus identity: tridiagonal SPD.
  const std::size_t n = 20;
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i) {
    t.push_back({i, i, 3.0});
    if (i > 0) t.push_back({i, i - 1, -1.0});
    if (i + 1 < n) t.push_back({i, i + 1, -1.0});
  }
  const auto a = SparseMatrix::from_triplets(n, n, t);
  const BandCholesky chol(a);
  EXPECT_EQ(chol.bandwidth(), 1u);
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(double(i));
  Vector b = a * x;
  chol.solve_in_place(b);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(b[i], x[i], 1e-13);

  const auto indefinite = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, -1.0}});
  EXPECT_THROW(BandCholesky{indefinite}, Error);
}

TEST(Dense, ConjugateGradientConverges) {
  const auto a = SparseMatrix::from_triplets(3, 3, {{0, 0, 4}, {0, 1, 1}, {1, 0, 1}, {1, 1, 3}, {2, 2, 2}});
  Vector b{1, 2, 3}, x(3, 0.0);
  EXPECT_GE(conjugate_gradient(a, b, x, 1e-14, 50), 0);
  const auto r = a * x;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r[i], b[i], 1e-12);
}
