#include <gtest/gtest.h>

#include <random>

#include "nmg/fem.hpp"
#include "oracles.hpp"

using namespace nmg;

namespace {

TriMesh unit_right_triangle() {
  TriMesh m;
  m.nodes = {{0, 0}, {1, 0}, {0, 1}};
  m.triangles = {{0, 1, 2}};
  m.boundary = {1, 1, 1};
  m.is_virtual = {0, 0, 0};
  return m;
}

}  // namespace

TEST(Fem, MassOnThreeNodeMesh) {
  const auto m = assemble_mass(uniform_mesh_1d(2, 0, 1));
  const double expect[3][3] = {{1.0 / 6, 1.0 / 12, 0}, {1.0 / 12, 1.0 / 3, 1.0 / 12}, {0, 1.0 / 12, 1.0 / 6}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(m(i, j), expect[i][j], 1e-15);
  const auto d = lump(m);
  EXPECT_NEAR(d[0], 0.25, 1e-15);
  EXPECT_NEAR(d[1], 0.5, 1e-15);
  EXPECT_NEAR(d[2], 0.25, 1e-15);
}

TEST(Fem, SingleTriangleMatrices) {
  const auto mesh = unit_right_triangle();
  const auto m = assemble_mass(mesh);
  const auto a = assemble_stiffness(mesh);
  const double ao[3][3] = {{1, -0.5, -0.5}, {-0.5, 0.5, 0}, {-0.5, 0, 0.5}};
  const auto mo = oracle::mass_2d(mesh);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(m(i, j), (i == j ? 2.0 : 1.0) / 24.0, 1e-15);
      EXPECT_NEAR(m(i, j), mo[i][j], 1e-15);
      EXPECT_NEAR(a(i, j), ao[i][j], 1e-15);
    }
  }
}

TEST(Fem, DegenerateTriangleThrows) {
  auto mesh = unit_right_triangle();
  mesh.nodes[2] = {2, 0};
  try {
    assemble_mass(mesh);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_mesh);
  }
  EXPECT_THROW(assemble_stiffness(mesh), Error);
}

TEST(Fem, LumpRejectsNonpositiveRows) {
  EXPECT_EQ(lump(SparseMatrix::identity(3)), Vector(3, 1.0));
  const auto bad = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 0, -1.0}});
  try {
    lump(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_mass);
  }
}

TEST(Fem, MassMatchesGaussOracleOnJittered1D) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const long n = 2 + long(seed * 13 % 49);
    const auto mesh = jitter_mesh(uniform_mesh_1d(n, -1.0, 2.0), 0.4, seed);
    const auto m = assemble_mass(mesh);
    const auto o = oracle::mass_1d(mesh.nodes());
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
      for (std::size_t j = 0; j < mesh.n_nodes(); ++j) ASSERT_NEAR(m(i, j), o[i][j], 1e-12);
    double total = 0.0;
    for (double v : lump(m)) total += v;
    EXPECT_NEAR(total, 3.0, 1e-12);
  }
}

TEST(Fem, MassMatchesGaussOracleOnJittered2D) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mesh = jitter_mesh(structured_tri_mesh(5, 4), 0.3, seed);
    const auto m = assemble_mass(mesh);
    const auto o = oracle::mass_2d(mesh);
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
      for (std::size_t j = 0; j < mesh.n_nodes(); ++j) ASSERT_NEAR(m(i, j), o[i][j], 1e-12);
    double total = 0.0;
    for (double v : lump(m)) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Fem, MassIsSymmetricPositiveDefinite) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const auto mesh = jitter_mesh(structured_tri_mesh(6, 6), 0.25, 11);
  const auto m = assemble_mass(mesh);
  EXPECT_LE(m.max_abs_diff(m.transpose()), 1e-15);
  for (int trial = 0; trial < 100; ++trial) {
    Vector x(m.rows());
    for (auto& v : x) v = n01(rng);
    EXPECT_GT(dot(x, m * x), 0.0);
  }
}

TEST(Fem, StiffnessAnnihilatesConstants) {
  const auto a1 = assemble_stiffness(jitter_mesh(uniform_mesh_1d(30, 0, 1), 0.3, 5));
  const auto a2 = assemble_stiffness(jitter_mesh(structured_tri_mesh(7, 5), 0.3, 5));
  for (const auto* a : {&a1, &a2}) {
    const Vector ones(a->rows(), 1.0);
    EXPECT_LE(norm_inf(*a * ones), 1e-12);
    EXPECT_LE(a->max_abs_diff(a->transpose()), 1e-15);
  }
  const auto a = assemble_stiffness(uniform_mesh_1d(4, 0, 1));
  EXPECT_NEAR(a(2, 1), -4.0, 1e-14);
  EXPECT_NEAR(a(2, 2), 8.0, 1e-14);
  EXPECT_NEAR(a(2, 3), -4.0, 1e-14);
}

TEST(Fem, LoadVector) {
  const auto mesh = uniform_mesh_1d(2, 0, 1);
  const auto b0 = assemble_load(mesh, [](double) { return 0.0; });
  EXPECT_EQ(b0, Vector(3, 0.0));
  const auto b = assemble_load(mesh, [](double x) { return x; });
  EXPECT_NEAR(b[1], 0.25, 1e-15);
  EXPECT_NEAR(b[2], 5.0 / 24.0, 1e-15);

  const auto tri = jitter_mesh(structured_tri_mesh(4, 4), 0.25, 2);
  const auto ones = assemble_load(tri, [](double, double) { return 1.0; });
  const auto d = lump(assemble_mass(tri));
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(ones[i], d[i], 1e-15);
}

TEST(Fem, DirichletElimination) {
  const auto mesh = uniform_mesh_1d(2, 0, 1);
  const auto a = assemble_stiffness(mesh);
  const Vector b{1, 1, 1};
  const auto sys = apply_dirichlet(a, b, mesh.boundary_flags());
  EXPECT_NEAR(sys.matrix(1, 1), 4.0, 1e-14);  // 2/h with h = 1/2
  EXPECT_EQ(sys.matrix(0, 0), 1.0);
  EXPECT_EQ(sys.matrix(0, 1), 0.0);
  EXPECT_EQ(sys.matrix(1, 0), 0.0);
  EXPECT_EQ(sys.rhs, (Vector{0, 1, 0}));

  const std::vector<std::uint8_t> all(3, 1), none(3, 0);
  EXPECT_EQ(apply_dirichlet(a, b, all).matrix.max_abs_diff(SparseMatrix::identity(3)), 0.0);
  EXPECT_EQ(apply_dirichlet(a, b, none).matrix.max_abs_diff(a), 0.0);
}
