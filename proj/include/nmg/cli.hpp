#pragma once

// Command implementations behind the `nmg` executable. Argument parsing
// lives in tools/nmg_cli.cpp; everything here takes validated structs.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "nmg/dataset.hpp"
#include "nmg/error.hpp"
#include "nmg/l2proj.hpp"
#include "nmg/mesh.hpp"
#include "nmg/multigrid.hpp"
#include "nmg/nn.hpp"
#include "nmg/text.hpp"

namespace nmg::cli {

namespace fs = std::filesystem;

inline void require_parent_dir(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  require(parent.empty() || fs::is_directory(parent), ErrorKind::io_error,
          "directory of " + path + " does not exist");
}

inline void require_file(const std::string& path) {
  require(fs::is_regular_file(path), ErrorKind::io_error, "no such file: " + path);
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataConfig {
  int dimension = 1;
  std::size_t patch_size = 3;
  ScheduleKind schedule = ScheduleKind::linear;
  long n0 = 10;
  long step = 10;         // linear
  long class_count = 20;  // linear
  long factor = 2;        // refinement
  long levels = 4;        // refinement
  std::size_t per_class = 1000;
  std::uint64_t seed = 1;
  double jitter = kDefaultJitter;
  std::string out;

  std::vector<long> classes() const {
    return schedule == ScheduleKind::linear ? class_schedule_linear(n0, step, class_count)
                                            : class_schedule_refinement(n0, factor, levels);
  }

  void validate() const {
    require(dimension == 1 || dimension == 2, ErrorKind::invalid_argument, "dimension must be 1 or 2");
    family_shape(dimension, patch_size);
    require(per_class > 0, ErrorKind::invalid_argument, "per-class count must be positive");
    require(jitter >= 0.0 && jitter < 0.5, ErrorKind::invalid_argument, "jitter must lie in [0, 1/2)");
    require(!out.empty(), ErrorKind::invalid_argument, "an output path is required");
    for (long n : classes()) {
      if (dimension == 1) {
        require(n >= 4, ErrorKind::invalid_argument, "1D classes need N >= 4");
      } else {
        long nx = 0, ny = 0;
        strip_shape(n, nx, ny);
      }
    }
    require_parent_dir(out);
  }
};

inline int cmd_gen_data(const GenDataConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto d = generate_dataset({cfg.dimension, cfg.patch_size, cfg.jitter}, cfg.schedule, cfg.classes(),
                                  cfg.per_class, cfg.seed);
  write_dataset(cfg.out, d);
  log << manifest_line(d.manifest) << '\n' << "records: " << d.records.size() << '\n';
  print_balance(log, balance_diagnostic(d.manifest));
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCommandConfig {
  std::string data;
  std::string out;
  std::string history;
  std::vector<std::size_t> hidden;  // empty: default architecture
  TrainConfig train;
  std::uint64_t split_seed = 7;

  void validate() const {
    require(!data.empty() && !out.empty(), ErrorKind::invalid_argument, "--data and --out are required");
    require_file(data);
    require_parent_dir(out);
    if (!history.empty()) require_parent_dir(history);
    for (auto h : hidden) require(h > 0, ErrorKind::invalid_argument, "hidden sizes must be positive");
    train.validate();
  }
};

inline int cmd_train(const TrainCommandConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto d = read_dataset(cfg.data);
  const auto& m = d.manifest;
  std::vector<std::size_t> sizes;
  if (cfg.hidden.empty()) {
    sizes = default_architecture(m.dimension, m.patch_size);
  } else {
    sizes.push_back(m.feature_len);
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(m.target_len);
  }
  MLPModel init = init_mlp(sizes, cfg.train.seed);
  init.dimension = m.dimension;
  init.patch_size = m.patch_size;
  init.manifest_hash = manifest_hash(m);

  std::vector<EpochStats> history;
  MLPModel model = init;
  if (cfg.train.epochs > 0) {
    const auto parts = split(d.records, cfg.split_seed);
    auto res = train(init, parts.train, parts.validation, cfg.train);
    model = std::move(res.model);
    history = std::move(res.history);
    log << "best_epoch: " << res.best_epoch << '\n'
        << "test_loss: " << format_real(mean_loss(model, parts.test, cfg.train.loss)) << '\n';
  }
  save_model(cfg.out, model);
  if (!cfg.history.empty()) {
    std::ofstream os(cfg.history);
    if (!os) fail(ErrorKind::io_error, "cannot open " + cfg.history);
    write_history_csv(os, history);
  }
  log << "model: " << cfg.out << " parameters: " << model.params.size() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// Problems and models shared by solve/bench
// ---------------------------------------------------------------------------

enum class Method { sgmg, neural };

inline const char* to_string(Method m) { return m == Method::sgmg ? "sgmg" : "neural"; }

struct ProblemConfig {
  int dimension = 1;
  long n = 128;  // elements (1D) or cells per side (2D)
  double jitter = 0.0;
  std::uint64_t mesh_seed = 1;
  bool zero_rhs = false;

  void validate() const {
    require(dimension == 1 || dimension == 2, ErrorKind::invalid_argument, "dimension must be 1 or 2");
    require(n >= 4 && n % 2 == 0, ErrorKind::invalid_argument, "n must be even and at least 4");
    require(jitter >= 0.0 && jitter < 0.5, ErrorKind::invalid_argument, "jitter must lie in [0, 1/2)");
  }
};

/// 1D: jittered uniform mesh. 2D: a jittered n/2 x n/2 structured mesh
/// refined along its edges, so the first coarsening is nested.
inline std::variant<Mesh1D, TriMesh> problem_mesh(const ProblemConfig& p) {
  if (p.dimension == 1) return jitter_mesh(uniform_mesh_1d(p.n, 0.0, 1.0), p.jitter, p.mesh_seed);
  if (p.jitter == 0.0) return structured_tri_mesh(p.n, p.n);
  const auto coarse = jitter_mesh(structured_tri_mesh(p.n / 2, p.n / 2), p.jitter, p.mesh_seed);
  return refine_lattice_along_edges(coarse, p.jitter, mix_seed(p.mesh_seed, 1));
}

struct ModelSet {
  std::map<std::size_t, std::string> paths;  // patch-size -> checkpoint
  std::string dir;                           // model_d{dim}_p{size}.nmg files

  bool empty() const { return paths.empty() && dir.empty(); }

  std::map<std::size_t, MLPModel> load(int dimension) const {
    std::map<std::size_t, std::string> all;
    if (!dir.empty()) {
      require(fs::is_directory(dir), ErrorKind::io_error, "no such directory: " + dir);
      const std::regex re("model_d" + std::to_string(dimension) + "_p([0-9]+)\\.nmg");
      for (const auto& e : fs::directory_iterator(dir)) {
        std::smatch mm;
        const auto name = e.path().filename().string();
        if (std::regex_match(name, mm, re)) all[std::stoul(mm[1].str())] = e.path().string();
      }
    }
    for (const auto& [k, v] : paths) all[k] = v;
    std::map<std::size_t, MLPModel> out;
    for (const auto& [size, path] : all) {
      auto m = load_model(path);
      if (m.dimension != dimension || m.patch_size != size)
        fail(ErrorKind::wrong_family, path + " serves dimension " + std::to_string(m.dimension) + ", patch-size " +
                                          std::to_string(m.patch_size));
      out.emplace(size, std::move(m));
    }
    return out;
  }
};

/// Parses "size=path".
inline std::pair<std::size_t, std::string> parse_model_arg(const std::string& s) {
  const auto eq = s.find('=');
  require(eq != std::string::npos && eq > 0 && eq + 1 < s.size(), ErrorKind::invalid_argument,
          "model argument must look like size=path: " + s);
  return {parse_int<std::size_t>(std::string_view(s).substr(0, eq)), s.substr(eq + 1)};
}

struct SolveRow {
  Method method = Method::sgmg;
  std::size_t levels = 0;
  std::size_t dofs = 0;
  int iterations = -1;
  double final_relres = std::nan("");
  double setup_ms = std::nan("");
  double solve_ms = std::nan("");
  double operator_ms = std::nan("");
  std::uint64_t intersections = 0;
  bool converged = false;
  std::string error;
  std::vector<double> history;
};

inline const char* kSolveHeader = "method,levels,dofs,iterations,final_relres,setup_ms,solve_ms";

inline void write_solve_row(std::ostream& os, const SolveRow& r) {
  os << to_string(r.method) << ',' << r.levels << ',' << r.dofs << ',' << r.iterations << ','
     << format_real(r.final_relres) << ',' << format_real(r.setup_ms) << ',' << format_real(r.solve_ms);
}

struct SolverConfig {
  std::size_t levels = 2;
  double tol = kDefaultTolerance;
  int max_iter = 100;
  SmootherConfig smoother;
  bool extend = false;
  FeatureSource features = FeatureSource::assembled;

  void validate() const {
    require(levels >= 2, ErrorKind::invalid_argument, "at least two levels are needed");
    require(tol > 0.0 && max_iter > 0, ErrorKind::invalid_argument, "tolerance and max-iter must be positive");
    smoother.validate();
  }
};

/// Builds one hierarchy and solves. Library errors are returned in the row.
inline SolveRow run_solve(Method method, const ProblemConfig& p, const SolverConfig& s,
                          const std::map<std::size_t, MLPModel>& models) {
  SolveRow row;
  row.method = method;
  row.levels = s.levels;
  try {
    const auto mesh = problem_mesh(p);
    const std::uint64_t before = intersection_counter().load();
    Hierarchy h;
    Vector b;
    std::visit(
        [&](const auto& m) {
          b = poisson_rhs(m);
          if (method == Method::sgmg) {
            h = build_hierarchy_sgmg(coarsening_chain(m, s.levels), s.smoother);
          } else {
            const ModelPredictor pred(models);
            h = build_hierarchy_neural(m, pred, NeuralOptions{s.levels, s.extend, s.features, s.smoother});
          }
        },
        mesh);
    row.intersections = intersection_counter().load() - before;
    if (p.zero_rhs) std::fill(b.begin(), b.end(), 0.0);
    row.dofs = h.levels[0].n_dofs();
    row.setup_ms = h.setup_ms;
    row.operator_ms = h.operator_ms;
    const auto res = solve(h, b, s.tol, s.max_iter);
    row.iterations = res.iterations;
    row.converged = res.converged;
    row.final_relres = res.history.empty() ? 0.0 : res.history.back();
    row.solve_ms = res.solve_ms;
    row.history = res.history;
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveCommandConfig {
  Method method = Method::sgmg;
  ProblemConfig problem;
  SolverConfig solver;
  ModelSet models;
  std::string out;          // CSV file; stdout when empty
  std::string history_out;  // optional residual history

  void validate() const {
    problem.validate();
    solver.validate();
    if (method == Method::neural) {
      require(!models.empty(), ErrorKind::missing_model, "neural solves need --model or --models-dir");
      for (const auto& [k, v] : models.paths) require_file(v);
      if (!models.dir.empty()) require(fs::is_directory(models.dir), ErrorKind::io_error, "no such directory");
    }
    if (!out.empty()) require_parent_dir(out);
    if (!history_out.empty()) require_parent_dir(history_out);
  }
};

inline int cmd_solve(const SolveCommandConfig& cfg, std::ostream& stdout_stream, std::ostream& log) {
  cfg.validate();
  std::map<std::size_t, MLPModel> models;
  if (cfg.method == Method::neural) models = cfg.models.load(cfg.problem.dimension);
  const auto row = run_solve(cfg.method, cfg.problem, cfg.solver, models);
  if (!row.error.empty()) {
    log << row.error << '\n';
    return 1;
  }
  std::ostringstream csv;
  csv << kSolveHeader << '\n';
  write_solve_row(csv, row);
  csv << '\n';
  if (cfg.out.empty()) {
    stdout_stream << csv.str();
  } else {
    std::ofstream os(cfg.out);
    if (!os) fail(ErrorKind::io_error, "cannot open " + cfg.out);
    os << csv.str();
  }
  if (!cfg.history_out.empty()) {
    std::ofstream os(cfg.history_out);
    os << "iteration,relres\n";
    for (std::size_t i = 0; i < row.history.size(); ++i) os << i + 1 << ',' << format_real(row.history[i]) << '\n';
  }
  if (!row.converged) {
    log << "did not reach tolerance in " << row.iterations << " iterations\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchConfig {
  ProblemConfig problem;  // n is replaced by each entry of `sizes`
  std::vector<long> sizes;
  SolverConfig solver;
  ModelSet models;
  std::string out;       // CSV
  std::string data_dir;  // two-column .dat files per curve; skipped when empty

  void validate() const {
    require(!sizes.empty(), ErrorKind::invalid_argument, "bench needs at least one size");
    for (long n : sizes) {
      ProblemConfig p = problem;
      p.n = n;
      p.validate();
    }
    solver.validate();
    require(!models.empty(), ErrorKind::missing_model, "bench needs trained models");
    for (const auto& [k, v] : models.paths) require_file(v);
    require(!out.empty(), ErrorKind::invalid_argument, "bench needs --out");
    require_parent_dir(out);
    if (!data_dir.empty()) require(fs::is_directory(data_dir), ErrorKind::io_error, "no such directory: " + data_dir);
  }
};

inline std::vector<SolveRow> run_bench(const BenchConfig& cfg, const std::map<std::size_t, MLPModel>& models) {
  std::vector<SolveRow> rows;
  for (long n : cfg.sizes) {
    ProblemConfig p = cfg.problem;
    p.n = n;
    for (Method m : {Method::sgmg, Method::neural}) rows.push_back(run_solve(m, p, cfg.solver, models));
  }
  return rows;
}

inline void write_bench_csv(std::ostream& os, const std::vector<SolveRow>& rows) {
  os << kSolveHeader << ",operator_ms,intersections,status\n";
  for (const auto& r : rows) {
    write_solve_row(os, r);
    std::string status = r.error.empty() ? (r.converged ? "ok" : "not-converged") : "error: " + r.error;
    for (auto& c : status)
      if (c == ',' || c == '\n') c = ';';
    os << ',' << format_real(r.operator_ms) << ',' << r.intersections << ',' << status << '\n';
  }
}

inline int cmd_bench(const BenchConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto models = cfg.models.load(cfg.problem.dimension);
  const auto rows = run_bench(cfg, models);
  {
    std::ofstream os(cfg.out);
    if (!os) fail(ErrorKind::io_error, "cannot open " + cfg.out);
    write_bench_csv(os, rows);
  }
  if (!cfg.data_dir.empty()) {
    for (Method m : {Method::sgmg, Method::neural}) {
      const std::string stem = (fs::path(cfg.data_dir) / to_string(m)).string();
      std::ofstream setup(stem + "_setup.dat"), op(stem + "_operator.dat"), solve_t(stem + "_solve.dat"),
          its(stem + "_iterations.dat");
      for (const auto& r : rows) {
        if (r.method != m || !r.error.empty()) continue;
        setup << r.dofs << ' ' << format_real(r.setup_ms) << '\n';
        op << r.dofs << ' ' << format_real(r.operator_ms) << '\n';
        solve_t << r.dofs << ' ' << format_real(r.solve_ms) << '\n';
        its << r.dofs << ' ' << r.iterations << '\n';
      }
    }
  }
  bool ok = true;
  for (const auto& r : rows) {
    log << to_string(r.method) << " dofs=" << r.dofs << " iterations=" << r.iterations
        << " setup_ms=" << format_real(r.setup_ms) << (r.error.empty() ? "" : " error=" + r.error) << '\n';
    ok = ok && r.error.empty();
  }
  return ok ? 0 : 4;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

struct InspectConfig {
  std::string mesh, matrix, dataset, model;

  void validate() const {
    const int n = !mesh.empty() + !matrix.empty() + !dataset.empty() + !model.empty();
    require(n == 1, ErrorKind::invalid_argument, "inspect takes exactly one of --mesh, --matrix, --dataset, --model");
    for (const auto* p : {&mesh, &matrix, &dataset, &model})
      if (!p->empty()) require_file(*p);
  }
};

inline int cmd_inspect(const InspectConfig& cfg, std::ostream& out) {
  cfg.validate();
  if (!cfg.mesh.empty()) {
    std::ifstream is(cfg.mesh);
    const auto any = read_mesh(is);
    if (const auto* m = std::get_if<Mesh1D>(&any)) {
      out << "dimension: 1\nnodes: " << m->n_nodes() << "\nelements: " << m->n_elements()
          << "\ndomain: " << format_real(m->a()) << ' ' << format_real(m->b()) << '\n';
    } else {
      const auto& t = std::get<TriMesh>(any);
      std::size_t nb = 0, nv = 0;
      for (std::size_t i = 0; i < t.n_nodes(); ++i) {
        nb += t.boundary[i];
        nv += t.is_virtual[i];
      }
      out << "dimension: 2\nnodes: " << t.n_nodes() << "\nelements: " << t.n_elements() << "\nboundary: " << nb
          << "\nvirtual: " << nv << "\narea: " << format_real(t.total_area())
          << "\nmin_area: " << format_real(t.min_area()) << '\n';
    }
  } else if (!cfg.matrix.empty()) {
    std::ifstream is(cfg.matrix);
    const auto a = SparseMatrix::read_text(is);
    out << "rows: " << a.rows() << "\ncols: " << a.cols() << "\nnnz: " << a.nnz()
        << "\nsymmetric: " << (is_symmetric(a) ? "yes" : "no") << '\n';
  } else if (!cfg.dataset.empty()) {
    const auto d = read_dataset(cfg.dataset);
    out << manifest_line(d.manifest) << "\nrecords: " << d.records.size() << '\n';
    print_balance(out, balance_diagnostic(d.manifest));
  } else {
    const auto m = load_model(cfg.model);
    out << "dimension: " << m.dimension << "\npatch_size: " << m.patch_size << "\nlayers:";
    for (auto s : m.layer_sizes) out << ' ' << s;
    out << "\nparameters: " << m.params.size() << "\nseed: " << m.seed << "\nmanifest_hash: " << m.manifest_hash
        << '\n';
  }
  return 0;
}

}  // namespace nmg::cli
