#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "nmg/error.hpp"
#include "nmg/mesh.hpp"
#include "nmg/sparse.hpp"

namespace nmg {

// Exact P1 element matrices:
//   1D mass      h/6 [[2,1],[1,2]]          1D stiffness 1/h [[1,-1],[-1,1]]
//   2D mass      |T|/12 [[2,1,1],[1,2,1],[1,1,2]]
//   2D stiffness |T| grad(phi_i) . grad(phi_j)

inline SparseMatrix assemble_mass(const Mesh1D& mesh) {
  std::vector<Triplet> t;
  t.reserve(4 * mesh.n_elements());
  for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
    const double h = mesh.h(e);
    t.push_back({e, e, h / 3.0});
    t.push_back({e, e + 1, h / 6.0});
    t.push_back({e + 1, e, h / 6.0});
    t.push_back({e + 1, e + 1, h / 3.0});
  }
  return SparseMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), std::move(t));
}

inline SparseMatrix assemble_mass(const TriMesh& mesh) {
  std::vector<Triplet> t;
  t.reserve(9 * mesh.n_elements());
  for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
    const double area = mesh.area(e);
    require(area > 0.0, ErrorKind::degenerate_mesh, "triangle " + std::to_string(e) + " is degenerate");
    const auto& tri = mesh.triangles[e];
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) t.push_back({tri[a], tri[b], area / 12.0 * (a == b ? 2.0 : 1.0)});
    }
  }
  return SparseMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), std::move(t));
}

inline SparseMatrix assemble_stiffness(const Mesh1D& mesh) {
  std::vector<Triplet> t;
  t.reserve(4 * mesh.n_elements());
  for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
    const double k = 1.0 / mesh.h(e);
    t.push_back({e, e, k});
    t.push_back({e, e + 1, -k});
    t.push_back({e + 1, e, -k});
    t.push_back({e + 1, e + 1, k});
  }
  return SparseMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), std::move(t));
}

inline SparseMatrix assemble_stiffness(const TriMesh& mesh) {
  std::vector<Triplet> t;
  t.reserve(9 * mesh.n_elements());
  for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
    const double area = mesh.area(e);
    require(area > 0.0, ErrorKind::degenerate_mesh, "triangle " + std::to_string(e) + " is degenerate");
    const auto& tri = mesh.triangles[e];
    // grad(phi_a) = rot90(p_{a+2} - p_{a+1}) / (2|T|)
    double gx[3], gy[3];
    for (int a = 0; a < 3; ++a) {
      const auto& p = mesh.nodes[tri[(a + 1) % 3]];
      const auto& q = mesh.nodes[tri[(a + 2) % 3]];
      gx[a] = (p.y - q.y) / (2.0 * area);
      gy[a] = (q.x - p.x) / (2.0 * area);
    }
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) t.push_back({tri[a], tri[b], area * (gx[a] * gx[b] + gy[a] * gy[b])});
    }
  }
  return SparseMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), std::move(t));
}

/// Row sums of a mass matrix (the lumped diagonal).
inline Vector lump(const SparseMatrix& m) {
  require(m.rows() == m.cols(), ErrorKind::invalid_argument, "lumping needs a square matrix");
  Vector d(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    d[i] = m.row_sum(i);
    require(d[i] > 0.0, ErrorKind::invalid_mass, "nonpositive lumped mass at row " + std::to_string(i));
  }
  return d;
}

using ScalarField1D = std::function<double(double)>;
using ScalarField2D = std::function<double(double, double)>;

/// b_i = int f phi_i, two-point Gauss per element (exact for linear f).
inline Vector assemble_load(const Mesh1D& mesh, const ScalarField1D& f) {
  Vector b(mesh.n_nodes(), 0.0);
  const double g = 0.5 / std::sqrt(3.0);
  for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
    const double h = mesh.h(e);
    for (double s : {0.5 - g, 0.5 + g}) {
      const double fx = f(mesh.nodes()[e] + s * h);
      b[e] += 0.5 * h * fx * (1.0 - s);
      b[e + 1] += 0.5 * h * fx * s;
    }
  }
  return b;
}

/// b_i = int f phi_i, edge-midpoint rule per triangle (exact for linear f).
inline Vector assemble_load(const TriMesh& mesh, const ScalarField2D& f) {
  Vector b(mesh.n_nodes(), 0.0);
  for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
    const auto& tri = mesh.triangles[e];
    const double w = mesh.area(e) / 3.0;
    for (int k = 0; k < 3; ++k) {
      const auto& p = mesh.nodes[tri[k]];
      const auto& q = mesh.nodes[tri[(k + 1) % 3]];
      const double fx = f(0.5 * (p.x + q.x), 0.5 * (p.y + q.y));
      // Basis values at the midpoint of edge (k, k+1): 1/2, 1/2, 0.
      b[tri[k]] += w * fx * 0.5;
      b[tri[(k + 1) % 3]] += w * fx * 0.5;
    }
  }
  return b;
}

struct DirichletSystem {
  SparseMatrix matrix;
  Vector rhs;
};

/// Zeroes boundary rows and columns, puts 1 on their diagonal and 0 in the
/// right-hand side (homogeneous data).
inline DirichletSystem apply_dirichlet(const SparseMatrix& a, std::span<const double> b,
                                       std::span<const std::uint8_t> boundary) {
  require(a.rows() == a.cols() && a.rows() == b.size() && b.size() == boundary.size(),
          ErrorKind::invalid_argument, "dirichlet shapes are inconsistent");
  std::vector<Triplet> t;
  t.reserve(a.nnz());
  for (const auto& e : a.triplets()) {
    if (boundary[e.row] || boundary[e.col]) continue;
    t.push_back(e);
  }
  for (std::size_t i = 0; i < boundary.size(); ++i)
    if (boundary[i]) t.push_back({i, i, 1.0});
  DirichletSystem out{SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t)),
                      Vector(b.begin(), b.end())};
  for (std::size_t i = 0; i < boundary.size(); ++i)
    if (boundary[i]) out.rhs[i] = 0.0;
  return out;
}

}  // namespace nmg
