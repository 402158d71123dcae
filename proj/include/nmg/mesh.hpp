#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nmg/error.hpp"
#include "nmg/text.hpp"

namespace nmg {

// ---------------------------------------------------------------------------
// 1D interval meshes
// ---------------------------------------------------------------------------

/// Strictly increasing nodes; element e spans [nodes[e], nodes[e+1]].
class Mesh1D {
 public:
  Mesh1D() = default;

  explicit Mesh1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    require(nodes_.size() >= 2, ErrorKind::invalid_argument, "a 1D mesh needs at least one element");
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
      require(nodes_[i] < nodes_[i + 1], ErrorKind::degenerate_mesh,
              "1D nodes must be strictly increasing (node " + std::to_string(i + 1) + ")");
    }
  }

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  std::size_t n_nodes() const noexcept { return nodes_.size(); }
  std::size_t n_elements() const noexcept { return nodes_.size() - 1; }
  double a() const { return nodes_.front(); }
  double b() const { return nodes_.back(); }
  double h(std::size_t e) const { return nodes_[e + 1] - nodes_[e]; }
  double measure() const { return b() - a(); }
  bool is_boundary(std::size_t i) const { return i == 0 || i + 1 == nodes_.size(); }

  std::vector<std::uint8_t> boundary_flags() const {
    std::vector<std::uint8_t> f(nodes_.size(), 0);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = is_boundary(i) ? 1 : 0;
    return f;
  }

  friend bool operator==(const Mesh1D&, const Mesh1D&) = default;

 private:
  std::vector<double> nodes_;
};

inline Mesh1D uniform_mesh_1d(long n_elements, double a, double b) {
  require(n_elements >= 1, ErrorKind::invalid_argument, "n_elements must be positive");
  require(a < b, ErrorKind::invalid_argument, "interval must satisfy a < b");
  std::vector<double> x(static_cast<std::size_t>(n_elements) + 1);
  for (long i = 0; i <= n_elements; ++i)
    x[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n_elements);
  x.back() = b;
  return Mesh1D(std::move(x));
}

// ---------------------------------------------------------------------------
// 2D triangulations
// ---------------------------------------------------------------------------

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

using Triangle = std::array<std::size_t, 3>;

inline double signed_area(const Point2& a, const Point2& b, const Point2& c) {
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

/// Lattice bookkeeping for structured meshes: maps (i, j) to a node id.
/// Cells are split along the (i,j)-(i+1,j+1) diagonal.
struct Lattice {
  long i_min = 0, i_max = 0, j_min = 0, j_max = 0;
  long nx = 0, ny = 0;  // cells of the non-virtual region
  double width = 1.0, height = 1.0;
  std::vector<long> node_at;  // row-major over the window, -1 if absent

  long at(long i, long j) const {
    if (i < i_min || i > i_max || j < j_min || j > j_max) return -1;
    return node_at[static_cast<std::size_t>((j - j_min) * (i_max - i_min + 1) + (i - i_min))];
  }
  friend bool operator==(const Lattice&, const Lattice&) = default;
};

struct TriMesh {
  std::vector<Point2> nodes;
  std::vector<Triangle> triangles;
  std::vector<std::uint8_t> boundary;
  std::vector<std::uint8_t> is_virtual;
  std::optional<Lattice> lattice;

  std::size_t n_nodes() const noexcept { return nodes.size(); }
  std::size_t n_elements() const noexcept { return triangles.size(); }

  double area(std::size_t t) const {
    const auto& tri = triangles[t];
    return signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
  }

  double total_area() const {
    double s = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) s += area(t);
    return s;
  }

  double min_area() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < triangles.size(); ++t) m = std::min(m, area(t));
    return m;
  }

  /// Area of the non-virtual region.
  double measure() const {
    double s = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      const auto& tri = triangles[t];
      if (!is_virtual[tri[0]] && !is_virtual[tri[1]] && !is_virtual[tri[2]]) s += area(t);
    }
    return s;
  }

  void validate() const {
    require(boundary.size() == nodes.size() && is_virtual.size() == nodes.size(),
            ErrorKind::invalid_argument, "flag arrays must match node count");
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (std::size_t v : triangles[t])
        require(v < nodes.size(), ErrorKind::out_of_range, "triangle references missing node");
      require(area(t) > 0.0, ErrorKind::degenerate_mesh,
              "triangle " + std::to_string(t) + " has nonpositive area");
    }
  }

  friend bool operator==(const TriMesh&, const TriMesh&) = default;
};

/// Unit-square (or width x height rectangle) grid, each cell split into two
/// right triangles along the same diagonal. Node (i, j) has id i + (nx+1) j.
inline TriMesh structured_tri_mesh(long nx, long ny, double width = 1.0, double height = 1.0) {
  require(nx >= 1 && ny >= 1, ErrorKind::invalid_argument, "nx, ny must be positive");
  require(width > 0.0 && height > 0.0, ErrorKind::invalid_argument, "extent must be positive");
  TriMesh m;
  const auto id = [nx](long i, long j) { return static_cast<std::size_t>(i + (nx + 1) * j); };
  for (long j = 0; j <= ny; ++j) {
    for (long i = 0; i <= nx; ++i) {
      m.nodes.push_back({width * static_cast<double>(i) / static_cast<double>(nx),
                         height * static_cast<double>(j) / static_cast<double>(ny)});
      m.boundary.push_back(i == 0 || i == nx || j == 0 || j == ny);
      m.is_virtual.push_back(0);
    }
  }
  for (long j = 0; j < ny; ++j) {
    for (long i = 0; i < nx; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  Lattice lat{0, nx, 0, ny, nx, ny, width, height, {}};
  lat.node_at.resize(static_cast<std::size_t>((nx + 1) * (ny + 1)));
  for (std::size_t k = 0; k < lat.node_at.size(); ++k) lat.node_at[k] = static_cast<long>(k);
  m.lattice = std::move(lat);
  return m;
}

// ---------------------------------------------------------------------------
// Patches
// ---------------------------------------------------------------------------

/// A node together with every node sharing an element with it. Members are
/// in canonical order with the center first.
struct Patch {
  std::size_t center = 0;
  std::vector<std::size_t> members;

  std::size_t size() const noexcept { return members.size(); }
  friend bool operator==(const Patch&, const Patch&) = default;
};

inline Patch patch(const Mesh1D& mesh, std::size_t node) {
  require(node < mesh.n_nodes(), ErrorKind::out_of_range, "node index " + std::to_string(node));
  Patch p{node, {node}};
  if (node > 0) p.members.push_back(node - 1);
  if (node + 1 < mesh.n_nodes()) p.members.push_back(node + 1);
  return p;
}

/// Node-to-neighbor fans of a triangulation, computed once.
///
/// Neighbors are listed counter-clockwise around the center. An open fan (a
/// node on the mesh boundary) starts at the first neighbor after the gap. A
/// closed fan starts at the (i+1, j) neighbor on lattice meshes, which keeps
/// the order stable under jitter; otherwise at the neighbor of smallest polar
/// angle measured from -pi/8, ties by index.
class TriAdjacency {
 public:
  explicit TriAdjacency(const TriMesh& mesh) : mesh_(&mesh), fans_(mesh.n_nodes()) {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> wedges(mesh.n_nodes());
    for (const auto& t : mesh.triangles) {
      wedges[t[0]].push_back({t[1], t[2]});
      wedges[t[1]].push_back({t[2], t[0]});
      wedges[t[2]].push_back({t[0], t[1]});
    }
    if (mesh.lattice) {
      const auto& lat = *mesh.lattice;
      east_.assign(mesh.n_nodes(), kNone);
      for (long j = lat.j_min; j <= lat.j_max; ++j) {
        for (long i = lat.i_min; i < lat.i_max; ++i) {
          const long a = lat.at(i, j), b = lat.at(i + 1, j);
          if (a >= 0 && b >= 0) east_[static_cast<std::size_t>(a)] = static_cast<std::size_t>(b);
        }
      }
    }
    for (std::size_t c = 0; c < mesh.n_nodes(); ++c) fans_[c] = build_fan(c, wedges[c]);
  }

  const std::vector<std::size_t>& neighbors(std::size_t node) const { return fans_.at(node); }

  Patch patch(std::size_t node) const {
    require(node < fans_.size(), ErrorKind::out_of_range, "node index " + std::to_string(node));
    Patch p{node, {node}};
    p.members.insert(p.members.end(), fans_[node].begin(), fans_[node].end());
    return p;
  }

 private:
  double ref_angle(std::size_t c, std::size_t k) const {
    const auto& a = mesh_->nodes[c];
    const auto& b = mesh_->nodes[k];
    double t = std::atan2(b.y - a.y, b.x - a.x) + std::numbers::pi / 8.0;
    if (t < 0.0) t += 2.0 * std::numbers::pi;
    if (t >= 2.0 * std::numbers::pi) t -= 2.0 * std::numbers::pi;
    return t;
  }

  std::vector<std::size_t> build_fan(std::size_t c,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& w) const {
    std::map<std::size_t, std::size_t> next;
    std::map<std::size_t, int> indeg;
    std::vector<std::size_t> all;
    bool manifold = true;
    for (auto [a, b] : w) {
      if (next.count(a)) manifold = false;
      next[a] = b;
      ++indeg[b];
      indeg.try_emplace(a, 0);
    }
    for (auto [k, d] : indeg) {
      all.push_back(k);
      if (d > 1) manifold = false;
    }
    std::vector<std::size_t> starts;
    for (auto [k, d] : indeg)
      if (d == 0) starts.push_back(k);

    const auto by_angle = [&](std::size_t x, std::size_t y) {
      const double ax = ref_angle(c, x), ay = ref_angle(c, y);
      return ax != ay ? ax < ay : x < y;
    };

    if (manifold && starts.size() <= 1 && !all.empty()) {
      std::size_t start = starts.empty() ? *std::min_element(all.begin(), all.end(), by_angle) : starts[0];
      if (starts.empty() && !east_.empty() && east_[c] != kNone && indeg.count(east_[c])) start = east_[c];
      std::vector<std::size_t> fan{start};
      std::size_t cur = start;
      while (fan.size() < all.size()) {
        auto it = next.find(cur);
        if (it == next.end() || it->second == start) break;
        cur = it->second;
        fan.push_back(cur);
      }
      if (fan.size() == all.size()) return fan;
    }
    // Non-manifold neighborhoods (hanging nodes): plain angular order.
    std::sort(all.begin(), all.end(), by_angle);
    return all;
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  const TriMesh* mesh_;
  std::vector<std::vector<std::size_t>> fans_;
  std::vector<std::size_t> east_;
};

inline Patch patch(const TriMesh& mesh, std::size_t node) {
  require(node < mesh.n_nodes(), ErrorKind::out_of_range, "node index " + std::to_string(node));
  return TriAdjacency(mesh).patch(node);
}

// ---------------------------------------------------------------------------
// Perturbation
// ---------------------------------------------------------------------------

inline constexpr double kDefaultJitter = 0.25;

/// Moves every interior node along an incident edge by a uniform fraction in
/// [-gamma, gamma] of that edge's length. Boundary nodes stay fixed.
inline Mesh1D jitter_mesh(const Mesh1D& mesh, double gamma, std::uint64_t seed) {
  require(gamma >= 0.0 && gamma < 0.5, ErrorKind::invalid_argument, "jitter gamma must lie in [0, 1/2)");
  if (gamma == 0.0) return mesh;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto& x = mesh.nodes();
  std::vector<double> draws(x.size(), 0.0);
  for (std::size_t i = 1; i + 1 < x.size(); ++i) draws[i] = u(rng);
  double scale = gamma;
  for (int attempt = 0; attempt <= 10; ++attempt, scale *= 0.5) {
    std::vector<double> y = x;
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
      const double d = draws[i];
      y[i] = x[i] + (d < 0.0 ? d * (x[i] - x[i - 1]) : d * (x[i + 1] - x[i])) * scale;
    }
    bool ok = true;
    for (std::size_t i = 0; i + 1 < y.size(); ++i) ok = ok && y[i] < y[i + 1];
    if (ok) return Mesh1D(std::move(y));
  }
  fail(ErrorKind::degenerate_mesh, "jitter inverted an element after 10 retries");
}

inline TriMesh jitter_mesh(const TriMesh& mesh, double gamma, std::uint64_t seed) {
  require(gamma >= 0.0 && gamma < 0.5, ErrorKind::invalid_argument, "jitter gamma must lie in [0, 1/2)");
  if (gamma == 0.0) return mesh;
  const TriAdjacency adj(mesh);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  struct Move {
    std::size_t toward = 0;
    double t = 0.0;
  };
  std::vector<Move> moves(mesh.n_nodes());
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
    if (mesh.boundary[i] || mesh.is_virtual[i]) continue;
    const auto& nb = adj.neighbors(i);
    if (nb.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
    moves[i].toward = nb[pick(rng)];
    moves[i].t = u(rng);
  }
  double scale = gamma;
  for (int attempt = 0; attempt <= 10; ++attempt, scale *= 0.5) {
    TriMesh out = mesh;
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
      if (moves[i].t == 0.0) continue;
      const auto& p = mesh.nodes[i];
      const auto& q = mesh.nodes[moves[i].toward];
      out.nodes[i] = {p.x + scale * moves[i].t * (q.x - p.x), p.y + scale * moves[i].t * (q.y - p.y)};
    }
    if (out.min_area() > 0.0) return out;
  }
  fail(ErrorKind::degenerate_mesh, "jitter inverted an element after 10 retries");
}

// ---------------------------------------------------------------------------
// Coarsening
// ---------------------------------------------------------------------------

template <class MeshT>
struct Coarsened {
  MeshT mesh;
  std::vector<std::size_t> fine_ids;  // coarse node k sits on fine node fine_ids[k]
};

/// Keeps every stride-th node and both endpoints.
inline Coarsened<Mesh1D> coarsen_1d(const Mesh1D& mesh, long stride) {
  require(stride >= 2, ErrorKind::invalid_argument, "stride must be at least 2");
  require(mesh.n_elements() >= static_cast<std::size_t>(2 * stride), ErrorKind::invalid_argument,
          "mesh needs at least 2*stride elements to coarsen");
  Coarsened<Mesh1D> out;
  std::vector<double> x;
  for (std::size_t i = 0; i < mesh.n_nodes(); i += static_cast<std::size_t>(stride)) {
    out.fine_ids.push_back(i);
    x.push_back(mesh.nodes()[i]);
  }
  if (out.fine_ids.back() != mesh.n_nodes() - 1) {
    out.fine_ids.push_back(mesh.n_nodes() - 1);
    x.push_back(mesh.b());
  }
  out.mesh = Mesh1D(std::move(x));
  return out;
}

/// Every other lattice node in each direction; positions are taken from the
/// (possibly perturbed) fine mesh.
inline Coarsened<TriMesh> coarsen_sublattice(const TriMesh& mesh) {
  require(mesh.lattice.has_value(), ErrorKind::invalid_argument, "sublattice coarsening needs a structured mesh");
  const auto& lat = *mesh.lattice;
  require(lat.i_min == 0 && lat.j_min == 0 && lat.i_max == lat.nx && lat.j_max == lat.ny,
          ErrorKind::invalid_argument, "sublattice coarsening of extended meshes is not supported");
  require(lat.nx % 2 == 0 && lat.ny % 2 == 0 && lat.nx >= 2 && lat.ny >= 2, ErrorKind::invalid_argument,
          "sublattice coarsening needs even nx, ny");
  Coarsened<TriMesh> out;
  out.mesh = structured_tri_mesh(lat.nx / 2, lat.ny / 2, lat.width, lat.height);
  for (long J = 0; J <= lat.ny / 2; ++J) {
    for (long I = 0; I <= lat.nx / 2; ++I) {
      const auto fine = static_cast<std::size_t>(lat.at(2 * I, 2 * J));
      const auto coarse = static_cast<std::size_t>(out.mesh.lattice->at(I, J));
      out.mesh.nodes[coarse] = mesh.nodes[fine];
      out.fine_ids.push_back(fine);
    }
  }
  out.mesh.validate();
  return out;
}

/// Structured refinement of a structured coarse mesh in which every new node
/// lies on the coarse edge it splits, at parameter 1/2 + U(-gamma, gamma)
/// (exactly 1/2 on boundary edges). Coarse nodes keep their positions, so the
/// coarse mesh is recovered exactly by coarsen_sublattice.
inline TriMesh refine_lattice_along_edges(const TriMesh& coarse, double gamma, std::uint64_t seed) {
  require(coarse.lattice.has_value(), ErrorKind::invalid_argument, "lattice refinement needs a structured mesh");
  require(gamma >= 0.0 && gamma < 0.5, ErrorKind::invalid_argument, "jitter gamma must lie in [0, 1/2)");
  const auto& cl = *coarse.lattice;
  require(cl.i_min == 0 && cl.j_min == 0, ErrorKind::invalid_argument, "extended meshes cannot be refined");
  TriMesh fine = structured_tri_mesh(2 * cl.nx, 2 * cl.ny, cl.width, cl.height);
  const auto& fl = *fine.lattice;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-gamma, gamma);
  for (long j = 0; j <= fl.ny; ++j) {
    for (long i = 0; i <= fl.nx; ++i) {
      const auto id = static_cast<std::size_t>(fl.at(i, j));
      if (i % 2 == 0 && j % 2 == 0) {
        fine.nodes[id] = coarse.nodes[static_cast<std::size_t>(cl.at(i / 2, j / 2))];
        continue;
      }
      // The two coarse endpoints of the edge containing (i, j).
      const long i0 = i - (i % 2), j0 = j - (j % 2);
      const long i1 = i + (i % 2), j1 = j + (j % 2);
      const auto& p = coarse.nodes[static_cast<std::size_t>(cl.at(i0 / 2, j0 / 2))];
      const auto& q = coarse.nodes[static_cast<std::size_t>(cl.at(i1 / 2, j1 / 2))];
      const double t = fine.boundary[id] ? 0.5 : 0.5 + (gamma > 0.0 ? u(rng) : 0.0);
      fine.nodes[id] = {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
    }
  }
  fine.validate();
  return fine;
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

inline Mesh1D refine_bisection(const Mesh1D& mesh) {
  std::vector<double> x;
  x.reserve(2 * mesh.n_nodes() - 1);
  for (std::size_t i = 0; i < mesh.n_elements(); ++i) {
    x.push_back(mesh.nodes()[i]);
    x.push_back(0.5 * (mesh.nodes()[i] + mesh.nodes()[i + 1]));
  }
  x.push_back(mesh.b());
  return Mesh1D(std::move(x));
}

namespace detail {

using EdgeKey = std::pair<std::size_t, std::size_t>;

inline EdgeKey edge_key(std::size_t a, std::size_t b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

/// Number of non-virtual triangles adjacent to each edge; an edge with
/// exactly one lies on the boundary of the non-virtual region.
inline std::map<EdgeKey, int> edge_counts(const TriMesh& m) {
  std::map<EdgeKey, int> count;
  for (const auto& t : m.triangles) {
    const bool real = !m.is_virtual[t[0]] && !m.is_virtual[t[1]] && !m.is_virtual[t[2]];
    for (int k = 0; k < 3; ++k) count[edge_key(t[k], t[(k + 1) % 3])] += real ? 1 : 0;
  }
  return count;
}

/// Returns the id of the midpoint of edge (a, b), creating it on first use.
class MidpointCache {
 public:
  MidpointCache(TriMesh& out, const std::map<EdgeKey, int>& counts) : out_(out), counts_(counts) {}

  std::size_t get(std::size_t a, std::size_t b) {
    const auto key = edge_key(a, b);
    if (auto it = ids_.find(key); it != ids_.end()) return it->second;
    const auto& p = out_.nodes[a];
    const auto& q = out_.nodes[b];
    const std::size_t id = out_.nodes.size();
    out_.nodes.push_back({0.5 * (p.x + q.x), 0.5 * (p.y + q.y)});
    out_.boundary.push_back(counts_.at(key) == 1);
    out_.is_virtual.push_back(out_.is_virtual[a] || out_.is_virtual[b]);
    ids_[key] = id;
    return id;
  }

 private:
  TriMesh& out_;
  const std::map<EdgeKey, int>& counts_;
  std::map<EdgeKey, std::size_t> ids_;
};

}  // namespace detail

/// Splits every triangle in two across its longest edge. Conforming whenever
/// neighbors agree on the shared longest edge (true for structured meshes).
inline TriMesh refine_bisection(const TriMesh& mesh) {
  TriMesh out;
  out.nodes = mesh.nodes;
  out.boundary = mesh.boundary;
  out.is_virtual = mesh.is_virtual;
  const auto counts = detail::edge_counts(mesh);
  detail::MidpointCache mid(out, counts);
  const auto len2 = [&](std::size_t a, std::size_t b) {
    const double dx = mesh.nodes[a].x - mesh.nodes[b].x, dy = mesh.nodes[a].y - mesh.nodes[b].y;
    return dx * dx + dy * dy;
  };
  for (const auto& t : mesh.triangles) {
    // Rotate so the longest edge is (t1, t2), opposite t0.
    int k = 0;
    double best = -1.0;
    for (int r = 0; r < 3; ++r) {
      const double l = len2(t[(r + 1) % 3], t[(r + 2) % 3]);
      if (l > best * (1.0 + 1e-12)) {
        best = l;
        k = r;
      }
    }
    const std::size_t a = t[k], b = t[(k + 1) % 3], c = t[(k + 2) % 3];
    const std::size_t m = mid.get(b, c);
    out.triangles.push_back({a, b, m});
    out.triangles.push_back({a, m, c});
  }
  return out;
}

/// Red refinement: edge midpoints joined, four children per triangle.
inline TriMesh refine_midpoint(const TriMesh& mesh) {
  TriMesh out;
  out.nodes = mesh.nodes;
  out.boundary = mesh.boundary;
  out.is_virtual = mesh.is_virtual;
  const auto counts = detail::edge_counts(mesh);
  detail::MidpointCache mid(out, counts);
  for (const auto& t : mesh.triangles) {
    const std::size_t a = t[0], b = t[1], c = t[2];
    const std::size_t ab = mid.get(a, b), bc = mid.get(b, c), ca = mid.get(c, a);
    out.triangles.push_back({a, ab, ca});
    out.triangles.push_back({ab, b, bc});
    out.triangles.push_back({ca, bc, c});
    out.triangles.push_back({ab, bc, ca});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Virtual extension
// ---------------------------------------------------------------------------

namespace detail {

/// Surrounds a structured mesh with `rings` layers of virtual cells that
/// continue the lattice pattern. Original node ids are preserved.
inline TriMesh add_ghost_rings(const TriMesh& mesh, long rings) {
  if (!mesh.lattice.has_value())
    fail(ErrorKind::unsupported_extension, "only structured meshes can be extended");
  const auto& lat = *mesh.lattice;
  if (lat.i_min != 0 || lat.j_min != 0)
    fail(ErrorKind::unsupported_extension, "mesh already carries a ghost layer");

  TriMesh out = mesh;
  Lattice ext{-rings, lat.nx + rings, -rings, lat.ny + rings, lat.nx, lat.ny, lat.width, lat.height, {}};
  const long wi = ext.i_max - ext.i_min + 1;
  ext.node_at.assign(static_cast<std::size_t>(wi * (ext.j_max - ext.j_min + 1)), -1);
  const double hx = lat.width / static_cast<double>(lat.nx);
  const double hy = lat.height / static_cast<double>(lat.ny);
  for (long j = ext.j_min; j <= ext.j_max; ++j) {
    for (long i = ext.i_min; i <= ext.i_max; ++i) {
      long id = lat.at(i, j);
      if (id < 0) {
        id = static_cast<long>(out.nodes.size());
        out.nodes.push_back({hx * static_cast<double>(i), hy * static_cast<double>(j)});
        out.boundary.push_back(0);
        out.is_virtual.push_back(1);
      }
      ext.node_at[static_cast<std::size_t>((j - ext.j_min) * wi + (i - ext.i_min))] = id;
    }
  }
  const auto node = [&](long i, long j) { return static_cast<std::size_t>(ext.at(i, j)); };
  for (long j = -rings; j < lat.ny + rings; ++j) {
    for (long i = -rings; i < lat.nx + rings; ++i) {
      if (i >= 0 && i < lat.nx && j >= 0 && j < lat.ny) continue;
      out.triangles.push_back({node(i, j), node(i + 1, j), node(i + 1, j + 1)});
      out.triangles.push_back({node(i, j), node(i + 1, j + 1), node(i, j + 1)});
    }
  }
  out.lattice = std::move(ext);
  out.validate();
  return out;
}

}  // namespace detail

/// Adds one ghost layer of virtual nodes and triangles around a structured
/// mesh so that every original node reaches `target_patch_size`.
inline TriMesh extend_mesh(const TriMesh& mesh, std::size_t target_patch_size) {
  {
    const TriAdjacency adj(mesh);
    bool done = true;
    for (std::size_t i = 0; i < mesh.n_nodes() && done; ++i)
      done = mesh.is_virtual[i] || adj.patch(i).size() == target_patch_size;
    if (done) return mesh;
  }
  TriMesh out = detail::add_ghost_rings(mesh, 1);
  const TriAdjacency adj(out);
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
    if (mesh.is_virtual[i]) continue;
    if (adj.patch(i).size() != target_patch_size)
      fail(ErrorKind::unsupported_extension,
           "patch-size " + std::to_string(target_patch_size) + " unreachable with one ghost layer");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text serialization
// ---------------------------------------------------------------------------

inline void write_mesh(std::ostream& os, const Mesh1D& m) {
  os << 1 << ' ' << m.n_nodes() << ' ' << m.n_elements() << '\n';
  for (double x : m.nodes()) os << format_real(x) << '\n';
  for (std::size_t e = 0; e < m.n_elements(); ++e) os << e << ' ' << e + 1 << '\n';
  for (std::size_t i = 0; i < m.n_nodes(); ++i) os << (m.is_boundary(i) ? 1 : 0) << " 0\n";
}

inline void write_mesh(std::ostream& os, const TriMesh& m) {
  os << 2 << ' ' << m.n_nodes() << ' ' << m.n_elements() << '\n';
  for (const auto& p : m.nodes) os << format_real(p.x) << ' ' << format_real(p.y) << '\n';
  for (const auto& t : m.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (std::size_t i = 0; i < m.n_nodes(); ++i)
    os << int(m.boundary[i]) << ' ' << int(m.is_virtual[i]) << '\n';
}

using AnyMesh = std::variant<Mesh1D, TriMesh>;

inline AnyMesh read_mesh(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  const auto next = [&]() -> std::vector<std::string_view> {
    if (!std::getline(is, line)) fail(ErrorKind::parse_error, "unexpected end of mesh file at line " + std::to_string(lineno + 1));
    ++lineno;
    return split_ws(line);
  };
  const auto bad = [&](const std::string& what) {
    fail(ErrorKind::parse_error, what + " at line " + std::to_string(lineno));
  };
  auto head = next();
  if (head.size() != 3) bad("mesh header must be 'dim n_nodes n_elements'");
  const int dim = parse_int<int>(head[0]);
  const auto nn = parse_int<std::size_t>(head[1]);
  const auto ne = parse_int<std::size_t>(head[2]);
  if (dim != 1 && dim != 2) bad("dimension must be 1 or 2");

  if (dim == 1) {
    std::vector<double> x;
    for (std::size_t i = 0; i < nn; ++i) {
      auto tok = next();
      if (tok.size() != 1) bad("expected one coordinate");
      x.push_back(parse_real(tok[0]));
    }
    for (std::size_t e = 0; e < ne; ++e) {
      auto tok = next();
      if (tok.size() != 2 || parse_int<std::size_t>(tok[0]) != e || parse_int<std::size_t>(tok[1]) != e + 1)
        bad("1D elements must join consecutive nodes");
    }
    for (std::size_t i = 0; i < nn; ++i) {
      if (next().size() != 2) bad("expected 'boundary virtual' flags");
    }
    Mesh1D m(std::move(x));
    if (m.n_elements() != ne) bad("element count mismatch");
    return m;
  }
  TriMesh m;
  for (std::size_t i = 0; i < nn; ++i) {
    auto tok = next();
    if (tok.size() != 2) bad("expected two coordinates");
    m.nodes.push_back({parse_real(tok[0]), parse_real(tok[1])});
  }
  for (std::size_t e = 0; e < ne; ++e) {
    auto tok = next();
    if (tok.size() != 3) bad("expected three node indices");
    m.triangles.push_back({parse_int<std::size_t>(tok[0]), parse_int<std::size_t>(tok[1]),
                           parse_int<std::size_t>(tok[2])});
  }
  for (std::size_t i = 0; i < nn; ++i) {
    auto tok = next();
    if (tok.size() != 2) bad("expected 'boundary virtual' flags");
    m.boundary.push_back(parse_int<int>(tok[0]) != 0);
    m.is_virtual.push_back(parse_int<int>(tok[1]) != 0);
  }
  m.validate();
  return m;
}

}  // namespace nmg
