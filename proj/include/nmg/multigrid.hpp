#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nmg/dataset.hpp"
#include "nmg/dense.hpp"
#include "nmg/error.hpp"
#include "nmg/fem.hpp"
#include "nmg/l2proj.hpp"
#include "nmg/mesh.hpp"
#include "nmg/nn.hpp"
#include "nmg/sparse.hpp"

namespace nmg {

enum class SmootherKind { jacobi, gauss_seidel };

inline const char* to_string(SmootherKind k) { return k == SmootherKind::jacobi ? "jacobi" : "gauss-seidel"; }

struct SmootherConfig {
  SmootherKind kind = SmootherKind::jacobi;
  int pre_sweeps = 2;
  int post_sweeps = 2;
  double omega = 2.0 / 3.0;

  void validate() const {
    require(pre_sweeps >= 0 && post_sweeps >= 0, ErrorKind::invalid_argument, "sweep counts must be >= 0");
    require(omega > 0.0 && omega <= 2.0, ErrorKind::invalid_argument, "omega must lie in (0, 2]");
  }
};

enum class Provenance { sgmg, neural };

inline const char* to_string(Provenance p) { return p == Provenance::sgmg ? "sgmg" : "neural"; }

struct Level {
  SparseMatrix a;  // operator with identity rows at Dirichlet nodes
  SparseMatrix m;  // mass, no boundary treatment
  std::optional<TransferOperator> q_to_finer;
  SparseMatrix p;  // q with Dirichlet rows and columns removed; used by the cycles
  std::vector<std::uint8_t> boundary;

  std::size_t n_dofs() const {
    std::size_t n = 0;
    for (auto b : boundary) n += b ? 0 : 1;
    return n;
  }
};

struct Hierarchy {
  std::vector<Level> levels;  // fine to coarse
  SmootherConfig smoother;
  Provenance provenance = Provenance::sgmg;
  double setup_ms = 0.0;     // whole construction
  double operator_ms = 0.0;  // transfer-operator construction only
  std::shared_ptr<const BandCholesky> coarse_solver;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline SparseMatrix mask_transfer(const SparseMatrix& q, std::span<const std::uint8_t> fine_b,
                                  std::span<const std::uint8_t> coarse_b) {
  return q.map([&](std::size_t r, std::size_t c, double v) { return fine_b[r] || coarse_b[c] ? 0.0 : v; });
}

inline SparseMatrix coarse_operator(const SparseMatrix& p, const SparseMatrix& a,
                                    std::span<const std::uint8_t> coarse_b) {
  SparseMatrix r = galerkin_coarse(p, a);
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < coarse_b.size(); ++i)
    if (coarse_b[i]) t.push_back({i, i, 1.0});
  return r.combine(1.0, SparseMatrix::from_triplets(r.rows(), r.cols(), std::move(t)), 1.0);
}

inline Level finest_level(const SparseMatrix& stiffness, SparseMatrix mass, std::vector<std::uint8_t> boundary) {
  Level l;
  const Vector zero(stiffness.rows(), 0.0);
  l.a = apply_dirichlet(stiffness, zero, boundary).matrix;
  l.m = std::move(mass);
  l.boundary = std::move(boundary);
  return l;
}

inline Level coarse_level(const Level& fine, TransferOperator q, std::vector<std::uint8_t> boundary) {
  Level l;
  l.p = mask_transfer(q.q, fine.boundary, boundary);
  l.m = galerkin_coarse(q, fine.m);
  l.a = coarse_operator(l.p, fine.a, boundary);
  l.q_to_finer = std::move(q);
  l.boundary = std::move(boundary);
  return l;
}

inline void finish(Hierarchy& h) {
  require(h.levels.size() >= 2, ErrorKind::invalid_argument, "a hierarchy needs at least two levels");
  for (std::size_t k = 1; k < h.levels.size(); ++k)
    require(h.levels[k].a.rows() < h.levels[k - 1].a.rows(), ErrorKind::invalid_argument,
            "level sizes must strictly decrease");
  h.coarse_solver = std::make_shared<const BandCholesky>(h.levels.back().a);
}

inline std::vector<std::uint8_t> boundary_of(const Mesh1D& m) { return m.boundary_flags(); }
inline std::vector<std::uint8_t> boundary_of(const TriMesh& m) { return m.boundary; }

}  // namespace detail

/// Fine-to-coarse chain by repeated stride-2 coarsening.
inline std::vector<Mesh1D> coarsening_chain(const Mesh1D& fine, std::size_t levels) {
  std::vector<Mesh1D> out{fine};
  while (out.size() < levels) out.push_back(coarsen_1d(out.back(), 2).mesh);
  return out;
}

/// Fine-to-coarse chain by repeated sublattice coarsening.
inline std::vector<TriMesh> coarsening_chain(const TriMesh& fine, std::size_t levels) {
  std::vector<TriMesh> out{fine};
  while (out.size() < levels) out.push_back(coarsen_sublattice(out.back()).mesh);
  return out;
}

/// Semi-geometric hierarchy: Q from mesh intersection and the pseudo
/// L2-projection on every level.
template <class MeshT>
Hierarchy build_hierarchy_sgmg(const std::vector<MeshT>& meshes, const SmootherConfig& smoother = {}) {
  smoother.validate();
  require(meshes.size() >= 2, ErrorKind::invalid_argument, "a hierarchy needs at least two meshes");
  const auto t0 = detail::Clock::now();
  Hierarchy h;
  h.smoother = smoother;
  h.provenance = Provenance::sgmg;
  h.levels.push_back(detail::finest_level(assemble_stiffness(meshes[0]), assemble_mass(meshes[0]),
                                          detail::boundary_of(meshes[0])));
  for (std::size_t k = 1; k < meshes.size(); ++k) {
    const auto t1 = detail::Clock::now();
    const SparseMatrix b = assemble_coupling(meshes[k - 1], meshes[k]);
    TransferOperator q = pseudo_projection(b, lump(h.levels.back().m));
    h.operator_ms += detail::ms_since(t1);
    h.levels.push_back(detail::coarse_level(h.levels.back(), std::move(q), detail::boundary_of(meshes[k])));
  }
  detail::finish(h);
  h.setup_ms = detail::ms_since(t0);
  return h;
}

// ---------------------------------------------------------------------------
// Neural hierarchy
// ---------------------------------------------------------------------------

struct PredictionRequest {
  std::size_t level = 0;  // index of the finer level of the pair
  const RecordLayout* layout = nullptr;
  std::span<const double> features;
};

/// Source of predicted B rows for one record.
class BPredictor {
 public:
  virtual ~BPredictor() = default;
  virtual bool covers(std::size_t patch_size) const = 0;
  virtual std::vector<double> predict(const PredictionRequest& req) const = 0;
};

/// One trained network per patch-size.
class ModelPredictor : public BPredictor {
 public:
  explicit ModelPredictor(std::map<std::size_t, MLPModel> models) : models_(std::move(models)) {}

  bool covers(std::size_t patch_size) const override { return models_.count(patch_size) > 0; }

  std::vector<double> predict(const PredictionRequest& req) const override {
    const auto it = models_.find(req.layout->patch_size());
    if (it == models_.end())
      fail(ErrorKind::missing_model, "no model for patch-size " + std::to_string(req.layout->patch_size()));
    return predict_b_rows(it->second, req.features);
  }

  const std::map<std::size_t, MLPModel>& models() const { return models_; }

 private:
  std::map<std::size_t, MLPModel> models_;
};

/// Returns exact B entries; used to test the neural pipeline independently
/// of network error.
class OraclePredictor : public BPredictor {
 public:
  explicit OraclePredictor(std::vector<SparseMatrix> b_per_level) : b_(std::move(b_per_level)) {}

  bool covers(std::size_t) const override { return true; }

  std::vector<double> predict(const PredictionRequest& req) const override {
    require(req.level < b_.size(), ErrorKind::out_of_range, "oracle has no B for level " + std::to_string(req.level));
    const auto& b = b_[req.level];
    std::vector<double> out;
    for (std::size_t k : req.layout->members)
      for (std::size_t c : req.layout->coarse_columns) out.push_back(b(k, c));
    return out;
  }

 private:
  std::vector<SparseMatrix> b_;
};

/// Where coarse-level features come from: the Galerkin mass of the level
/// (literal reading) or a mass matrix assembled on the coarsened mesh.
enum class FeatureSource { galerkin, assembled };

inline const char* to_string(FeatureSource f) { return f == FeatureSource::galerkin ? "galerkin" : "assembled"; }

struct NeuralOptions {
  std::size_t levels = 2;
  bool extend = false;  // 2D only: one size-7 family via virtual ghost rings
  FeatureSource features = FeatureSource::assembled;
  SmootherConfig smoother;
};

namespace detail {

/// Averages every predicted entry over the records that cover it.
class BAccumulator {
 public:
  BAccumulator(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  void add(const RecordLayout& layout, std::span<const double> values) {
    std::size_t i = 0;
    for (std::size_t k : layout.members) {
      for (std::size_t c : layout.coarse_columns) {
        const double v = values[i++];
        if (k >= rows_ || c >= cols_) continue;
        entries_.push_back({k, c, v});
      }
    }
  }

  SparseMatrix matrix() {
    std::stable_sort(entries_.begin(), entries_.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<Triplet> mean;
    for (std::size_t i = 0; i < entries_.size();) {
      std::size_t j = i;
      double sum = 0.0;
      for (; j < entries_.size() && entries_[j].row == entries_[i].row && entries_[j].col == entries_[i].col; ++j)
        sum += entries_[j].value;
      mean.push_back({entries_[i].row, entries_[i].col, sum / double(j - i)});
      i = j;
    }
    return SparseMatrix::from_triplets(rows_, cols_, std::move(mean), 0.0);
  }

 private:
  std::size_t rows_, cols_;
  std::vector<Triplet> entries_;
};

inline SparseMatrix predict_b(const LayoutBuilder& lb, const SparseMatrix& features_m, const BPredictor& pred,
                              std::size_t level, std::size_t rows, std::size_t cols) {
  const std::size_t n = std::min(cols, lb.n_coarse());
  std::vector<RecordLayout> layouts;
  layouts.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    layouts.push_back(lb.layout(k));
    const auto size = layouts.back().patch_size();
    if (!pred.covers(size)) fail(ErrorKind::missing_model, "no model for patch-size " + std::to_string(size));
  }
  BAccumulator acc(rows, cols);
  for (const auto& layout : layouts) {
    const auto f = extract_features(features_m, layout);
    const auto y = pred.predict({level, &layout, f});
    require(y.size() == layout.target_len(), ErrorKind::wrong_family, "prediction length mismatch");
    acc.add(layout, y);
  }
  return acc.matrix();
}

inline Hierarchy build_neural(const std::vector<Mesh1D>& meshes, const BPredictor& pred, const NeuralOptions& opt) {
  require(!opt.extend, ErrorKind::unsupported_extension, "mesh extension is defined for 2D meshes only");
  const auto t0 = Clock::now();
  Hierarchy h;
  h.smoother = opt.smoother;
  h.provenance = Provenance::neural;
  h.levels.push_back(finest_level(assemble_stiffness(meshes[0]), assemble_mass(meshes[0]), boundary_of(meshes[0])));
  for (std::size_t k = 1; k < meshes.size(); ++k) {
    const auto t1 = Clock::now();
    const auto& fine = meshes[k - 1];
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < fine.n_nodes(); i += 2) ids.push_back(i);
    if (ids.back() != fine.n_nodes() - 1) ids.push_back(fine.n_nodes() - 1);
    const LayoutBuilder lb(fine.n_nodes(), ids);
    const SparseMatrix& m = h.levels.back().m;
    const SparseMatrix assembled = opt.features == FeatureSource::assembled && k > 1 ? assemble_mass(fine) : m;
    const SparseMatrix b = predict_b(lb, assembled, pred, k - 1, fine.n_nodes(), meshes[k].n_nodes());
    TransferOperator q = pseudo_projection(b, lump(m));
    q.kind = TransferKind::predicted;
    h.operator_ms += ms_since(t1);
    h.levels.push_back(coarse_level(h.levels.back(), std::move(q), boundary_of(meshes[k])));
  }
  finish(h);
  h.setup_ms = ms_since(t0);
  return h;
}

inline Hierarchy build_neural(const std::vector<TriMesh>& meshes, const BPredictor& pred, const NeuralOptions& opt) {
  const auto t0 = Clock::now();
  Hierarchy h;
  h.smoother = opt.smoother;
  h.provenance = Provenance::neural;
  h.levels.push_back(finest_level(assemble_stiffness(meshes[0]), assemble_mass(meshes[0]), boundary_of(meshes[0])));
  for (std::size_t k = 1; k < meshes.size(); ++k) {
    const auto t1 = Clock::now();
    const auto& fine = meshes[k - 1];
    const auto& coarse = meshes[k];
    const SparseMatrix& m = h.levels.back().m;
    SparseMatrix b;
    if (opt.extend) {
      // Two virtual rings make every member of a boundary patch a full
      // interior-type node, so only the patch-size 7 family is needed.
      const TriMesh ef = detail::add_ghost_rings(fine, 2);
      const TriMesh ec = detail::add_ghost_rings(coarse, 1);
      const LayoutBuilder lb(ef, ec);
      b = predict_b(lb, assemble_mass(ef), pred, k - 1, fine.n_nodes(), coarse.n_nodes());
    } else {
      const LayoutBuilder lb(fine, coarse);
      const SparseMatrix assembled = opt.features == FeatureSource::assembled && k > 1 ? assemble_mass(fine) : m;
      b = predict_b(lb, assembled, pred, k - 1, fine.n_nodes(), coarse.n_nodes());
    }
    TransferOperator q = pseudo_projection(b, lump(m));
    q.kind = TransferKind::predicted;
    h.operator_ms += ms_since(t1);
    h.levels.push_back(coarse_level(h.levels.back(), std::move(q), boundary_of(coarse)));
  }
  finish(h);
  h.setup_ms = ms_since(t0);
  return h;
}

}  // namespace detail

/// Coarse nodes are chosen by stride 2 (1D) or the sublattice (2D); B rows
/// come from `pred`, then Q = pseudo-projection and Galerkin coarse operators.
template <class MeshT>
Hierarchy build_hierarchy_neural(const MeshT& fine, const BPredictor& pred, const NeuralOptions& opt = {}) {
  opt.smoother.validate();
  require(opt.levels >= 2, ErrorKind::invalid_argument, "a hierarchy needs at least two levels");
  return detail::build_neural(coarsening_chain(fine, opt.levels), pred, opt);
}

// ---------------------------------------------------------------------------
// Cycles
// ---------------------------------------------------------------------------

inline void smooth(const SparseMatrix& a, std::span<const double> b, std::span<double> x, SmootherKind kind,
                   int sweeps, double omega) {
  require(a.rows() == a.cols() && a.rows() == b.size() && b.size() == x.size(), ErrorKind::invalid_argument,
          "smoother shapes are inconsistent");
  const Vector d = a.diagonal();
  for (std::size_t i = 0; i < d.size(); ++i)
    require(d[i] != 0.0, ErrorKind::invalid_matrix, "zero diagonal at row " + std::to_string(i));
  Vector r(x.size());
  for (int s = 0; s < sweeps; ++s) {
    if (kind == SmootherKind::jacobi) {
      a.multiply(x, r);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += omega * (b[i] - r[i]) / d[i];
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto cols = a.row_cols(i);
        const auto vals = a.row_values(i);
        double acc = b[i];
        for (std::size_t k = 0; k < cols.size(); ++k)
          if (cols[k] != i) acc -= vals[k] * x[cols[k]];
        x[i] = acc / d[i];
      }
    }
  }
}

namespace detail {

inline void cycle(const Hierarchy& h, std::size_t l, std::span<const double> b, std::span<double> x,
                  const BandCholesky* exact) {
  const Level& fine = h.levels[l];
  const auto& s = h.smoother;
  if (exact != nullptr && l + 1 == h.levels.size()) {
    std::copy(b.begin(), b.end(), x.begin());
    exact->solve_in_place(x);
    return;
  }
  smooth(fine.a, b, x, s.kind, s.pre_sweeps, s.omega);
  Vector r(x.size());
  fine.a.multiply(x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  const Level& coarse = h.levels[l + 1];
  Vector rc(coarse.a.rows()), ec(coarse.a.rows(), 0.0);
  coarse.p.multiply_transpose(r, rc);
  if (l + 2 == h.levels.size()) {
    std::copy(rc.begin(), rc.end(), ec.begin());
    exact->solve_in_place(ec);
  } else {
    cycle(h, l + 1, rc, ec, exact);
  }
  coarse.p.multiply(ec, r);
  for (std::size_t i = 0; i < r.size(); ++i) x[i] += r[i];
  smooth(fine.a, b, x, s.kind, s.post_sweeps, s.omega);
}

}  // namespace detail

/// Smooth, exact coarse correction on level 1, smooth.
inline void two_grid_step(const Hierarchy& h, std::span<const double> b, std::span<double> x) {
  require(h.levels.size() >= 2, ErrorKind::invalid_argument, "two-grid needs two levels");
  if (h.levels.size() == 2) {
    detail::cycle(h, 0, b, x, h.coarse_solver.get());
    return;
  }
  Hierarchy top;
  top.levels = {h.levels[0], h.levels[1]};
  top.smoother = h.smoother;
  const BandCholesky exact(h.levels[1].a);
  detail::cycle(top, 0, b, x, &exact);
}

inline void vcycle(const Hierarchy& h, std::span<const double> b, std::span<double> x) {
  require(h.levels.size() >= 2 && h.coarse_solver, ErrorKind::invalid_argument, "hierarchy is not finished");
  require(b.size() == h.levels[0].a.rows() && x.size() == b.size(), ErrorKind::invalid_argument,
          "vector length does not match the finest level");
  detail::cycle(h, 0, b, x, h.coarse_solver.get());
}

struct SolveResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;  // relative residual after each iteration
  double solve_ms = 0.0;
};

inline constexpr double kDefaultTolerance = 1e-8;

/// V-cycles from x = 0 until ||b - Ax|| / ||b|| < tol. Non-convergence is
/// reported through `converged`, not thrown.
inline SolveResult solve(const Hierarchy& h, std::span<const double> b, double tol = kDefaultTolerance,
                         int max_iter = 100) {
  require(tol > 0.0, ErrorKind::invalid_argument, "tolerance must be positive");
  const auto t0 = detail::Clock::now();
  SolveResult res;
  res.x.assign(b.size(), 0.0);
  const double nb = norm2(b);
  if (nb == 0.0) {
    res.converged = true;
    return res;
  }
  const auto& a = h.levels[0].a;
  Vector r(b.size());
  for (int it = 0; it < max_iter; ++it) {
    vcycle(h, b, res.x);
    a.multiply(res.x, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    const double rel = norm2(r) / nb;
    res.history.push_back(rel);
    res.iterations = it + 1;
    if (!std::isfinite(rel)) break;
    if (rel < tol) {
      res.converged = true;
      break;
    }
  }
  res.solve_ms = detail::ms_since(t0);
  return res;
}

/// Right-hand side of the model problem -u'' = f (or -Laplace u = f) with
/// homogeneous Dirichlet data, f = 1.
template <class MeshT>
Vector poisson_rhs(const MeshT& mesh) {
  Vector b;
  if constexpr (std::is_same_v<MeshT, Mesh1D>) {
    b = assemble_load(mesh, [](double) { return 1.0; });
    b.front() = 0.0;
    b.back() = 0.0;
  } else {
    b = assemble_load(mesh, [](double, double) { return 1.0; });
    for (std::size_t i = 0; i < b.size(); ++i)
      if (mesh.boundary[i]) b[i] = 0.0;
  }
  return b;
}

}  // namespace nmg
