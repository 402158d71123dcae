#include <gtest/gtest.h>

#include <random>

#include "nmg/l2proj.hpp"
#include "oracles.hpp"

using namespace nmg;

namespace {

void expect_matches_oracle(const SparseMatrix& b, const std::map<std::pair<std::size_t, std::size_t>, double>& o,
                           double tol) {
  for (const auto& [key, v] : o) ASSERT_NEAR(b(key.first, key.second), v, tol) << key.first << "," << key.second;
  for (const auto& e : b.triplets()) {
    const auto it = o.find({e.row, e.col});
    ASSERT_NEAR(e.value, it == o.end() ? 0.0 : it->second, tol);
  }
}

double det3(const std::vector<std::vector<double>>& a) {
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

}  // namespace

TEST(Intersect1D, Segments) {
  const auto fine = uniform_mesh_1d(2, 0, 1), coarse = uniform_mesh_1d(1, 0, 1);
  const auto s = intersect_1d(fine, coarse);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].x0, 0.0);
  EXPECT_EQ(s[0].x1, 0.5);
  EXPECT_EQ(s[1].x1, 1.0);
  EXPECT_EQ(intersect_1d(fine, fine).size(), 2u);
  EXPECT_THROW(intersect_1d(fine, uniform_mesh_1d(1, 0, 2)), Error);

  const auto j = jitter_mesh(uniform_mesh_1d(17, 0, 3), 0.3, 4);
  const auto c = coarsen_1d(jitter_mesh(uniform_mesh_1d(9, 0, 3), 0.3, 5), 2).mesh;
  double total = 0.0;
  for (const auto& seg : intersect_1d(j, c)) {
    EXPECT_GE(seg.x0, j.nodes()[seg.fine_elem]);
    EXPECT_LE(seg.x1, j.nodes()[seg.fine_elem + 1]);
    EXPECT_GE(seg.x0, c.nodes()[seg.coarse_elem]);
    EXPECT_LE(seg.x1, c.nodes()[seg.coarse_elem + 1]);
    total += seg.x1 - seg.x0;
  }
  EXPECT_NEAR(total, 3.0, 1e-14);
}

TEST(IntersectTri, Examples) {
  const TriangleGeom a{{{0, 0}, {1, 0}, {0, 1}}};
  const TriangleGeom b{{{0, 0}, {1, 0}, {1, 1}}};
  const auto p = intersect_tri(a, b);
  EXPECT_NEAR(p.area(), 0.25, 1e-15);
  ASSERT_EQ(p.vertices.size(), 3u);
  // Half-plane enumeration: the vertices are the points of a and b inside
  // both triangles plus edge crossings.
  std::vector<Point2> expect{{0, 0}, {1, 0}, {0.5, 0.5}};
  for (const auto& e : expect) {
    bool found = false;
    for (const auto& v : p.vertices) found = found || (std::abs(v.x - e.x) < 1e-15 && std::abs(v.y - e.y) < 1e-15);
    EXPECT_TRUE(found) << e.x << "," << e.y;
  }
  EXPECT_NEAR(intersect_tri(a, a).area(), 0.5, 1e-14);
  const TriangleGeom far{{{5, 5}, {6, 5}, {5, 6}}};
  EXPECT_TRUE(intersect_tri(a, far).empty());
}

TEST(IntersectTri, AreasPartitionFineTriangle) {
  const auto coarse = jitter_mesh(structured_tri_mesh(4, 4), 0.3, 1);
  const auto fine = jitter_mesh(structured_tri_mesh(7, 9), 0.3, 2);
  for (std::size_t e = 0; e < fine.n_elements(); ++e) {
    const auto ft = detail::geometry(fine, e);
    double sum = 0.0;
    for (std::size_t E = 0; E < coarse.n_elements(); ++E) {
      const auto ct = detail::geometry(coarse, E);
      const auto p = intersect_tri(ft, ct);
      EXPECT_LE(p.area(), std::min(triangle_area(ft), triangle_area(ct)) + 1e-15);
      sum += p.area();
    }
    EXPECT_NEAR(sum, triangle_area(ft), 1e-12);
  }
}

TEST(TriangulatePolygon, Fan) {
  Polygon2D sq{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  const auto t = triangulate_polygon(sq);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_NEAR(triangle_area(t[0]), 0.5, 1e-15);
  EXPECT_NEAR(triangle_area(t[1]), 0.5, 1e-15);
  EXPECT_EQ(triangulate_polygon(Polygon2D{{{0, 0}, {1, 0}, {0, 1}}}).size(), 1u);
  EXPECT_TRUE(triangulate_polygon(Polygon2D{{{0, 0}, {1, 0}}}).empty());
}

TEST(Coupling, ThreeNodeExample) {
  const auto fine = uniform_mesh_1d(2, 0, 1), coarse = uniform_mesh_1d(1, 0, 1);
  const auto b = assemble_coupling(fine, coarse);
  const double expect[3][2] = {{5.0 / 24, 1.0 / 24}, {0.25, 0.25}, {1.0 / 24, 5.0 / 24}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(b(i, j), expect[i][j], 1e-15);

  const auto q = pseudo_projection(b, lump(assemble_mass(fine)));
  const double qe[3][2] = {{5.0 / 6, 1.0 / 6}, {0.5, 0.5}, {1.0 / 6, 5.0 / 6}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(q.q(i, j), qe[i][j], 1e-15);
  EXPECT_EQ(q.kind, TransferKind::pseudo);
  EXPECT_LE(q.constant_defect(), 1e-12);
}

TEST(Coupling, IdenticalMeshesGiveMass) {
  const auto m1 = jitter_mesh(uniform_mesh_1d(12, 0, 1), 0.3, 9);
  EXPECT_LE(assemble_coupling(m1, m1).max_abs_diff(assemble_mass(m1)), 1e-15);
  const auto m2 = jitter_mesh(structured_tri_mesh(4, 3), 0.3, 9);
  EXPECT_LE(assemble_coupling(m2, m2).max_abs_diff(assemble_mass(m2)), 1e-15);
  const auto q = pseudo_projection(assemble_mass(m2), lump(assemble_mass(m2)));
  EXPECT_LE(q.constant_defect(), 1e-12);
}

TEST(Coupling, MatchesOracleOnJitteredPairs1D) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const long n = 4 + long(seed % 46);
    const auto fine = jitter_mesh(uniform_mesh_1d(n, 0, 1), 0.3, seed);
    const auto coarse = jitter_mesh(uniform_mesh_1d(std::max(1L, n / 3), 0, 1), 0.3, seed + 100);
    const auto b = assemble_coupling(fine, coarse);
    expect_matches_oracle(b, oracle::coupling_1d(fine.nodes(), coarse.nodes()), 1e-12);
    const auto d = lump(assemble_mass(fine));
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(b.row_sum(i), d[i], 1e-12);
  }
}

TEST(Coupling, MatchesOracleOnJitteredPairs2D) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto fine = jitter_mesh(structured_tri_mesh(6, 5), 0.3, seed);
    const auto coarse = jitter_mesh(structured_tri_mesh(3, 4), 0.3, seed + 50);
    const auto b = assemble_coupling(fine, coarse);
    expect_matches_oracle(b, oracle::coupling_2d(fine, coarse), 1e-12);
    const auto d = lump(assemble_mass(fine));
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(b.row_sum(i), d[i], 1e-12);
  }
}

TEST(Coupling, DomainMismatchThrows) {
  EXPECT_THROW(assemble_coupling(structured_tri_mesh(2, 2), structured_tri_mesh(2, 2, 2.0, 1.0)), Error);
}

TEST(Coupling, MonteCarloSanity1D) {
  // Independent stochastic check: a dense midpoint sampling of phi_i * psi_j.
  const auto fine = jitter_mesh(uniform_mesh_1d(20, 0, 1), 0.3, 1);
  const auto coarse = coarsen_1d(fine, 2).mesh;
  const auto b = assemble_coupling(fine, coarse);
  const int samples = 200000;
  for (std::size_t i : {3u, 10u}) {
    for (std::size_t j = 0; j < coarse.n_nodes(); ++j) {
      double s = 0.0;
      for (int k = 0; k < samples; ++k) {
        const double x = (k + 0.5) / samples;
        s += oracle::hat_1d(fine.nodes(), i, x) * oracle::hat_1d(coarse.nodes(), j, x);
      }
      EXPECT_NEAR(b(i, j), s / samples, 1e-6);
    }
  }
}

TEST(Projection, PseudoRejectsBadMass) {
  const auto b = SparseMatrix::identity(2);
  try {
    pseudo_projection(b, Vector{1.0, 0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_mass);
  }
}

TEST(Projection, ConsistentIdentityAndThreeNodeCase) {
  const auto m = jitter_mesh(uniform_mesh_1d(9, 0, 1), 0.3, 3);
  const auto mm = assemble_mass(m);
  const auto q = consistent_projection(mm, mm);
  EXPECT_EQ(q.kind, TransferKind::consistent);
  EXPECT_LE(q.q.max_abs_diff(SparseMatrix::identity(m.n_nodes())), 1e-10);

  const auto fine = uniform_mesh_1d(2, 0, 1), coarse = uniform_mesh_1d(1, 0, 1);
  const auto b = assemble_coupling(fine, coarse);
  const auto mf = assemble_mass(fine);
  const auto qc = consistent_projection(b, mf);
  // Cramer's rule oracle on the 3x3 system M q_j = b_j.
  const auto md = mf.to_dense();
  const double dm = det3(md);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t i = 0; i < 3; ++i) {
      auto mi = md;
      for (std::size_t r = 0; r < 3; ++r) mi[r][i] = b(r, j);
      EXPECT_NEAR(qc.q(i, j), det3(mi) / dm, 1e-12);
    }
  }
  EXPECT_LE(qc.constant_defect(), 1e-10);
  const auto qp = pseudo_projection(b, lump(mf));
  EXPECT_GT(qc.q.max_abs_diff(qp.q), 0.1);
}

TEST(Galerkin, IdentityAndDenseTripleProduct) {
  const auto x = assemble_mass(jitter_mesh(uniform_mesh_1d(6, 0, 1), 0.2, 1));
  EXPECT_LE(galerkin_coarse(SparseMatrix::identity(7), x).max_abs_diff(x), 1e-17);

  const auto fine = uniform_mesh_1d(2, 0, 1), coarse = uniform_mesh_1d(1, 0, 1);
  const auto mf = assemble_mass(fine);
  const auto q = pseudo_projection(assemble_coupling(fine, coarse), lump(mf));
  const auto mh = galerkin_coarse(q, mf);
  const auto qd = q.q.to_dense(), md = mf.to_dense();
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += qd[i][a] * md[i][j] * qd[j][c];
      EXPECT_NEAR(mh(a, c), s, 1e-15);
    }
  }
  EXPECT_THROW(galerkin_coarse(SparseMatrix::identity(2), mf), Error);
}

TEST(Galerkin, CoarseMassIsPositiveDefinite) {
  const auto fine = jitter_mesh(structured_tri_mesh(8, 8), 0.25, 4);
  const auto coarse = coarsen_sublattice(structured_tri_mesh(8, 8)).mesh;
  const auto mf = assemble_mass(fine);
  const auto q = pseudo_projection(assemble_coupling(fine, coarse), lump(mf));
  const auto mh = galerkin_coarse(q, mf);
  EXPECT_TRUE(is_symmetric(mh));
  EXPECT_NO_THROW(BandCholesky{mh});
}
