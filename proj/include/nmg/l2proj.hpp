#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "nmg/dense.hpp"
#include "nmg/error.hpp"
#include "nmg/fem.hpp"
#include "nmg/mesh.hpp"
#include "nmg/sparse.hpp"

namespace nmg {

/// Counts every mesh-intersection primitive call (1D segment merges and
/// triangle clips). The neural pipeline must leave it untouched.
inline std::atomic<std::uint64_t>& intersection_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

enum class TransferKind { pseudo, consistent, predicted };

inline const char* to_string(TransferKind k) {
  switch (k) {
    case TransferKind::pseudo: return "pseudo";
    case TransferKind::consistent: return "consistent";
    case TransferKind::predicted: return "predicted";
  }
  return "unknown";
}

/// Prolongation Q (n_fine x n_coarse); restriction is its transpose.
struct TransferOperator {
  SparseMatrix q;
  TransferKind kind = TransferKind::pseudo;

  std::size_t n_fine() const { return q.rows(); }
  std::size_t n_coarse() const { return q.cols(); }

  /// max_i |sum_j Q_ij - 1|
  double constant_defect() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i) worst = std::max(worst, std::abs(q.row_sum(i) - 1.0));
    return worst;
  }
};

// ---------------------------------------------------------------------------
// 1D intersection
// ---------------------------------------------------------------------------

struct Segment1D {
  std::size_t fine_elem = 0;
  std::size_t coarse_elem = 0;
  double x0 = 0.0;
  double x1 = 0.0;
};

namespace detail {

inline void require_same_interval(const Mesh1D& fine, const Mesh1D& coarse) {
  const double tol = 1e-12 * std::max(fine.measure(), coarse.measure());
  require(std::abs(fine.a() - coarse.a()) <= tol && std::abs(fine.b() - coarse.b()) <= tol,
          ErrorKind::invalid_argument, "meshes must span the same interval");
}

}  // namespace detail

/// Merges both breakpoint sets; each returned segment lies in exactly one
/// fine and one coarse element.
inline std::vector<Segment1D> intersect_1d(const Mesh1D& fine, const Mesh1D& coarse) {
  detail::require_same_interval(fine, coarse);
  ++intersection_counter();
  std::vector<Segment1D> out;
  const auto& xf = fine.nodes();
  const auto& xc = coarse.nodes();
  std::size_t e = 0, E = 0;
  double lo = fine.a();
  while (e < fine.n_elements() && E < coarse.n_elements()) {
    const double hi = std::min(xf[e + 1], xc[E + 1]);
    if (hi > lo) out.push_back({e, E, lo, hi});
    lo = std::max(lo, hi);
    if (xf[e + 1] <= hi) ++e;
    if (xc[E + 1] <= hi) ++E;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2D intersection
// ---------------------------------------------------------------------------

using TriangleGeom = std::array<Point2, 3>;

/// Convex polygon, counter-clockwise.
struct Polygon2D {
  std::vector<Point2> vertices;

  bool empty() const noexcept { return vertices.size() < 3; }
  double area() const {
    double s = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      const auto& p = vertices[i];
      const auto& q = vertices[(i + 1) % vertices.size()];
      s += p.x * q.y - q.x * p.y;
    }
    return 0.5 * s;
  }
};

inline double triangle_area(const TriangleGeom& t) { return signed_area(t[0], t[1], t[2]); }

/// Clips `subject` against each edge half-plane of `clip` in turn.
inline Polygon2D intersect_tri(const TriangleGeom& subject, const TriangleGeom& clip) {
  ++intersection_counter();
  double scale = 0.0;
  for (int k = 0; k < 3; ++k) {
    for (const auto& t : {subject, clip}) {
      const double dx = t[(k + 1) % 3].x - t[k].x, dy = t[(k + 1) % 3].y - t[k].y;
      scale = std::max(scale, std::hypot(dx, dy));
    }
  }
  const double tol = 1e-13 * scale;

  std::vector<Point2> cur(subject.begin(), subject.end());
  std::vector<Point2> next;
  for (int k = 0; k < 3 && !cur.empty(); ++k) {
    const Point2 a = clip[k], b = clip[(k + 1) % 3];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len = std::hypot(ex, ey);
    const auto dist = [&](const Point2& p) { return (ex * (p.y - a.y) - ey * (p.x - a.x)) / len; };
    next.clear();
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const Point2& p = cur[i];
      const Point2& q = cur[(i + 1) % cur.size()];
      const double dp = dist(p), dq = dist(q);
      if (dp >= -tol) next.push_back(p);
      if ((dp > tol && dq < -tol) || (dp < -tol && dq > tol)) {
        const double s = dp / (dp - dq);
        next.push_back({p.x + s * (q.x - p.x), p.y + s * (q.y - p.y)});
      }
    }
    cur.swap(next);
  }
  // Collapse coincident consecutive vertices.
  Polygon2D poly;
  for (const auto& p : cur) {
    if (!poly.vertices.empty()) {
      const auto& q = poly.vertices.back();
      if (std::hypot(p.x - q.x, p.y - q.y) <= tol) continue;
    }
    poly.vertices.push_back(p);
  }
  while (poly.vertices.size() > 1) {
    const auto& p = poly.vertices.front();
    const auto& q = poly.vertices.back();
    if (std::hypot(p.x - q.x, p.y - q.y) > tol) break;
    poly.vertices.pop_back();
  }
  if (poly.vertices.size() < 3 || poly.area() <= 0.0) poly.vertices.clear();
  return poly;
}

/// Fan triangulation from vertex 0.
inline std::vector<TriangleGeom> triangulate_polygon(const Polygon2D& p) {
  std::vector<TriangleGeom> out;
  if (p.vertices.size() < 3) return out;
  for (std::size_t k = 1; k + 1 < p.vertices.size(); ++k)
    out.push_back({p.vertices[0], p.vertices[k], p.vertices[k + 1]});
  return out;
}

/// Barycentric coordinates of `x` in triangle `t`.
inline std::array<double, 3> barycentric(const TriangleGeom& t, const Point2& x) {
  const double area = triangle_area(t);
  return {signed_area(x, t[1], t[2]) / area, signed_area(t[0], x, t[2]) / area,
          signed_area(t[0], t[1], x) / area};
}

// ---------------------------------------------------------------------------
// Coupling operator
// ---------------------------------------------------------------------------

/// Relative area below which an intersection piece is treated as a sliver.
inline constexpr double kSliverTolerance = 1e-14;

/// B_ij = int phi_i psi_j (fine basis i, coarse basis j), two-point Gauss
/// on each intersection segment.
inline SparseMatrix assemble_coupling(const Mesh1D& fine, const Mesh1D& coarse) {
  const auto segments = intersect_1d(fine, coarse);
  const double g = 0.5 / std::sqrt(3.0);
  std::vector<Triplet> t;
  t.reserve(4 * segments.size());
  const auto& xf = fine.nodes();
  const auto& xc = coarse.nodes();
  for (const auto& s : segments) {
    const double len = s.x1 - s.x0;
    const std::size_t e = s.fine_elem, E = s.coarse_elem;
    double acc[2][2] = {{0, 0}, {0, 0}};
    for (double r : {0.5 - g, 0.5 + g}) {
      const double x = s.x0 + r * len;
      const double lf = (x - xf[e]) / (xf[e + 1] - xf[e]);
      const double lc = (x - xc[E]) / (xc[E + 1] - xc[E]);
      const double phi[2] = {1.0 - lf, lf};
      const double psi[2] = {1.0 - lc, lc};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) acc[a][b] += 0.5 * len * phi[a] * psi[b];
    }
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) t.push_back({e + a, E + b, acc[a][b]});
  }
  return SparseMatrix::from_triplets(fine.n_nodes(), coarse.n_nodes(), std::move(t));
}

namespace detail {

/// Uniform bucket grid over triangle bounding boxes.
class TriangleBuckets {
 public:
  explicit TriangleBuckets(const TriMesh& mesh) : mesh_(&mesh) {
    x0_ = y0_ = std::numeric_limits<double>::infinity();
    double x1 = -x0_, y1 = -y0_;
    for (const auto& p : mesh.nodes) {
      x0_ = std::min(x0_, p.x);
      y0_ = std::min(y0_, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    const double side = std::sqrt(std::max(1.0, static_cast<double>(mesh.n_elements())));
    nx_ = ny_ = static_cast<long>(std::ceil(side / 1.5)) + 1;
    dx_ = std::max(x1 - x0_, 1e-300) / static_cast<double>(nx_);
    dy_ = std::max(y1 - y0_, 1e-300) / static_cast<double>(ny_);
    cells_.resize(static_cast<std::size_t>(nx_ * ny_));
    for (std::size_t t = 0; t < mesh.n_elements(); ++t) {
      const auto [i0, i1, j0, j1] = range(bbox(t));
      for (long j = j0; j <= j1; ++j)
        for (long i = i0; i <= i1; ++i) cells_[static_cast<std::size_t>(j * nx_ + i)].push_back(t);
    }
  }

  std::array<double, 4> bbox(std::size_t t) const {
    const auto& tri = mesh_->triangles[t];
    std::array<double, 4> b{mesh_->nodes[tri[0]].x, mesh_->nodes[tri[0]].x, mesh_->nodes[tri[0]].y,
                            mesh_->nodes[tri[0]].y};
    for (int k = 1; k < 3; ++k) {
      const auto& p = mesh_->nodes[tri[k]];
      b[0] = std::min(b[0], p.x);
      b[1] = std::max(b[1], p.x);
      b[2] = std::min(b[2], p.y);
      b[3] = std::max(b[3], p.y);
    }
    return b;
  }

  /// Candidate triangles whose bounding box overlaps `box`, sorted, unique.
  std::vector<std::size_t> query(const std::array<double, 4>& box) const {
    std::vector<std::size_t> out;
    const auto [i0, i1, j0, j1] = range(box);
    for (long j = j0; j <= j1; ++j)
      for (long i = i0; i <= i1; ++i) {
        for (std::size_t t : cells_[static_cast<std::size_t>(j * nx_ + i)]) {
          const auto b = bbox(t);
          const double pad = 1e-12 * std::max(dx_, dy_);
          if (b[0] <= box[1] + pad && box[0] <= b[1] + pad && b[2] <= box[3] + pad && box[2] <= b[3] + pad)
            out.push_back(t);
        }
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  std::array<long, 4> range(const std::array<double, 4>& b) const {
    const auto clampi = [](long v, long n) { return std::clamp(v, 0L, n - 1); };
    return {clampi(static_cast<long>(std::floor((b[0] - x0_) / dx_)), nx_),
            clampi(static_cast<long>(std::floor((b[1] - x0_) / dx_)), nx_),
            clampi(static_cast<long>(std::floor((b[2] - y0_) / dy_)), ny_),
            clampi(static_cast<long>(std::floor((b[3] - y0_) / dy_)), ny_)};
  }

  const TriMesh* mesh_;
  double x0_, y0_, dx_, dy_;
  long nx_, ny_;
  std::vector<std::vector<std::size_t>> cells_;
};

inline TriangleGeom geometry(const TriMesh& m, std::size_t t) {
  const auto& tri = m.triangles[t];
  return {m.nodes[tri[0]], m.nodes[tri[1]], m.nodes[tri[2]]};
}

}  // namespace detail

/// B_ij = int phi_i psi_j over fine/coarse triangle intersections, each
/// polygon fan-triangulated and integrated with the edge-midpoint rule.
inline SparseMatrix assemble_coupling(const TriMesh& fine, const TriMesh& coarse) {
  const double af = fine.total_area(), ac = coarse.total_area();
  require(std::abs(af - ac) <= 1e-10 * std::max(af, ac), ErrorKind::invalid_argument,
          "meshes must cover the same domain");
  const detail::TriangleBuckets buckets(coarse);
  std::vector<Triplet> t;
  t.reserve(9 * 4 * fine.n_elements());
  for (std::size_t e = 0; e < fine.n_elements(); ++e) {
    const auto ft = detail::geometry(fine, e);
    const double fine_area = triangle_area(ft);
    std::array<double, 4> box{ft[0].x, ft[0].x, ft[0].y, ft[0].y};
    for (const auto& p : ft) {
      box[0] = std::min(box[0], p.x);
      box[1] = std::max(box[1], p.x);
      box[2] = std::min(box[2], p.y);
      box[3] = std::max(box[3], p.y);
    }
    for (std::size_t E : buckets.query(box)) {
      const auto ct = detail::geometry(coarse, E);
      const Polygon2D poly = intersect_tri(ft, ct);
      if (poly.empty() || poly.area() < kSliverTolerance * fine_area) continue;
      double acc[3][3] = {};
      for (const auto& piece : triangulate_polygon(poly)) {
        const double w = triangle_area(piece) / 3.0;
        for (int k = 0; k < 3; ++k) {
          const Point2 m{0.5 * (piece[k].x + piece[(k + 1) % 3].x), 0.5 * (piece[k].y + piece[(k + 1) % 3].y)};
          const auto phi = barycentric(ft, m);
          const auto psi = barycentric(ct, m);
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) acc[a][b] += w * phi[a] * psi[b];
        }
      }
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) t.push_back({fine.triangles[e][a], coarse.triangles[E][b], acc[a][b]});
    }
  }
  return SparseMatrix::from_triplets(fine.n_nodes(), coarse.n_nodes(), std::move(t));
}

// ---------------------------------------------------------------------------
// Projections and Galerkin products
// ---------------------------------------------------------------------------

/// Q = D^{-1} B with D the lumped fine mass.
inline TransferOperator pseudo_projection(const SparseMatrix& b, std::span<const double> lumped) {
  require(lumped.size() == b.rows(), ErrorKind::invalid_argument, "lumped mass length mismatch");
  for (std::size_t i = 0; i < lumped.size(); ++i)
    require(lumped[i] > 0.0, ErrorKind::invalid_mass, "nonpositive lumped mass at row " + std::to_string(i));
  return {b.map([&](std::size_t r, std::size_t, double v) { return v / lumped[r]; }), TransferKind::pseudo};
}

/// Q = M^{-1} B, column by column with conjugate gradients.
inline TransferOperator consistent_projection(const SparseMatrix& b, const SparseMatrix& m) {
  require(m.rows() == m.cols() && m.rows() == b.rows(), ErrorKind::invalid_argument,
          "mass/coupling shape mismatch");
  const std::size_t n = m.rows();
  const SparseMatrix bt = b.transpose();
  std::vector<Triplet> t;
  Vector rhs(n), x(n);
  for (std::size_t j = 0; j < b.cols(); ++j) {
    std::fill(rhs.begin(), rhs.end(), 0.0);
    const auto rows = bt.row_cols(j);
    const auto vals = bt.row_values(j);
    for (std::size_t k = 0; k < rows.size(); ++k) rhs[rows[k]] = vals[k];
    std::fill(x.begin(), x.end(), 0.0);
    if (conjugate_gradient(m, rhs, x, 1e-12, static_cast<int>(10 * n)) < 0)
      fail(ErrorKind::solver_failure, "CG did not converge for column " + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(x[i]) > 1e-13) t.push_back({i, j, x[i]});
  }
  return {SparseMatrix::from_triplets(n, b.cols(), std::move(t), 0.0), TransferKind::consistent};
}

inline bool is_symmetric(const SparseMatrix& x, double rel_tol = 1e-14) {
  if (x.rows() != x.cols()) return false;
  double scale = 0.0;
  for (const auto& e : x.triplets()) scale = std::max(scale, std::abs(e.value));
  return x.max_abs_diff(x.transpose()) <= rel_tol * scale;
}

/// Q^T X Q, symmetrized when X is symmetric.
inline SparseMatrix galerkin_coarse(const SparseMatrix& q, const SparseMatrix& x) {
  require(x.rows() == x.cols() && x.cols() == q.rows(), ErrorKind::invalid_argument,
          "galerkin product shape mismatch");
  SparseMatrix r = q.transpose() * (x * q);
  if (is_symmetric(x)) r = r.combine(0.5, r.transpose(), 0.5);
  return r;
}

inline SparseMatrix galerkin_coarse(const TransferOperator& q, const SparseMatrix& x) {
  return galerkin_coarse(q.q, x);
}

}  // namespace nmg
