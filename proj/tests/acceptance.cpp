// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.
// Training artifacts and the bench report go to --workdir.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gradcheck.hpp"
#include "nmg/cli.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace nmg;
using namespace nmg::cli;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

double max_diff(const SparseMatrix& b, const std::map<std::pair<std::size_t, std::size_t>, double>& o) {
  double worst = 0.0;
  for (const auto& [key, v] : o) worst = std::max(worst, std::abs(b(key.first, key.second) - v));
  for (const auto& e : b.triplets()) {
    const auto it = o.find({e.row, e.col});
    worst = std::max(worst, std::abs(e.value - (it == o.end() ? 0.0 : it->second)));
  }
  return worst;
}

// Shared by criteria 1 and 2.
struct PairStats {
  double coupling_err = 0.0;
  double constant_defect = 0.0;
  std::size_t pairs = 0;
  double seconds = 0.0;
};

PairStats run_pairs() {
  PairStats s;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 200; ++k) {
    const long n = 2 * std::uniform_int_distribution<long>(2, 25)(rng);
    const auto fine = jitter_mesh(uniform_mesh_1d(n, 0, 1), 0.3, rng());
    const auto coarse = coarsen_1d(fine, 2).mesh;
    const auto b = assemble_coupling(fine, coarse);
    s.coupling_err = std::max(s.coupling_err, max_diff(b, oracle::coupling_1d(fine.nodes(), coarse.nodes())));
    s.constant_defect = std::max(s.constant_defect, pseudo_projection(b, lump(assemble_mass(fine))).constant_defect());
    ++s.pairs;
  }
  for (int k = 0; k < 50; ++k) {
    const long nx = 2 * std::uniform_int_distribution<long>(2, 8)(rng);
    const long ny = 2 * std::uniform_int_distribution<long>(2, 8)(rng);
    const auto fine = jitter_mesh(structured_tri_mesh(nx, ny), 0.3, rng());
    // Alternate nested (sublattice) and independent coarse meshes.
    const TriMesh coarse = k % 2 == 0 ? coarsen_sublattice(fine).mesh
                                      : jitter_mesh(structured_tri_mesh(nx / 2, ny / 2), 0.3, rng());
    const auto b = assemble_coupling(fine, coarse);
    s.coupling_err = std::max(s.coupling_err, max_diff(b, oracle::coupling_2d(fine, coarse)));
    s.constant_defect = std::max(s.constant_defect, pseudo_projection(b, lump(assemble_mass(fine))).constant_defect());
    ++s.pairs;
  }
  s.seconds = seconds_since(t0);
  return s;
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    worst = std::max(worst, gradcheck::max_relative_error(gradcheck::random_instance(1000 + seed), {0.5, 0.5}));
  const double t = seconds_since(t0);
  return {worst < 1e-5 && t < 10.0, "20 instances, max rel err " + fmt(worst) + ", " + fmt(t) + " s"};
}

double hierarchy_diff(const Hierarchy& a, const Hierarchy& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.levels.size(); ++k) {
    d = std::max({d, a.levels[k].a.max_abs_diff(b.levels[k].a), a.levels[k].m.max_abs_diff(b.levels[k].m)});
    if (k > 0) d = std::max(d, a.levels[k].q_to_finer->q.max_abs_diff(b.levels[k].q_to_finer->q));
  }
  return d;
}

template <class MeshT>
double plumbing(const MeshT& fine, std::size_t levels) {
  const auto chain = coarsening_chain(fine, levels);
  std::vector<SparseMatrix> b;
  for (std::size_t k = 1; k < chain.size(); ++k) b.push_back(assemble_coupling(chain[k - 1], chain[k]));
  const auto s = build_hierarchy_sgmg(chain);
  const auto n = build_hierarchy_neural(fine, OraclePredictor(b), {levels, false, FeatureSource::galerkin, {}});
  return hierarchy_diff(s, n);
}

Outcome criterion4() {
  const double d1 = plumbing(jitter_mesh(uniform_mesh_1d(128, 0, 1), 0.25, 5), 3);
  const double d2 = plumbing(structured_tri_mesh(8, 8), 2);
  return {d1 <= 1e-12 && d2 <= 1e-12, "1D 127 dofs 3 levels diff " + fmt(d1) + "; 2D 9x9 2 levels diff " + fmt(d2)};
}

void gen_and_train(const GenDataConfig& g, const std::string& model, int epochs, std::ostream& log) {
  cmd_gen_data(g, log);
  TrainCommandConfig t;
  t.data = g.out;
  t.out = model;
  t.history = model + ".history.csv";
  t.train.epochs = epochs;
  t.train.lr_decay = 0.95;
  t.train.train_biases = false;
  cmd_train(t, log);
}

Outcome criterion5(const fs::path& work, std::ostream& log) {
  const auto t0 = Clock::now();
  const auto dir = work / "models_1d";
  fs::create_directories(dir);
  for (std::size_t p : {3, 2}) {
    GenDataConfig g;
    g.dimension = 1;
    g.patch_size = p;
    g.n0 = 10;
    g.step = 10;
    g.class_count = 20;
    g.per_class = 1000;
    g.out = (work / ("data_d1_p" + std::to_string(p) + ".txt")).string();
    gen_and_train(g, (dir / ("model_d1_p" + std::to_string(p) + ".nmg")).string(), 60, log);
  }
  const double train_s = seconds_since(t0);
  ModelSet ms;
  ms.dir = dir.string();
  const auto models = ms.load(1);

  bool pass = train_s < 600.0;
  bool parity = true;
  std::string detail;
  std::string galerkin;
  for (std::size_t levels : {2, 3}) {
    for (long n : {128, 256}) {
      for (std::uint64_t seed : {9001, 9002, 9003}) {
        const ProblemConfig p{1, n, kDefaultJitter, seed, false};
        SolverConfig s;
        s.levels = levels;
        const auto a = run_solve(Method::sgmg, p, s, models);
        const auto b = run_solve(Method::neural, p, s, models);
        const bool ok = a.converged && b.converged && b.iterations <= a.iterations + 2;
        pass = pass && ok;
        parity = parity && b.iterations == a.iterations;
        detail += " L" + std::to_string(levels) + "/" + std::to_string(n - 1) + ":" + std::to_string(a.iterations) +
                  "/" + std::to_string(b.iterations) + (ok ? "" : "!");
        if (levels == 3 && seed == 9001) {
          s.features = FeatureSource::galerkin;
          const auto c = run_solve(Method::neural, p, s, models);
          galerkin += " " + std::to_string(n - 1) + ":" + std::to_string(c.iterations);
        }
      }
    }
  }
  log << "criterion 5 informational, 3-level neural with Galerkin features (dofs:iterations):" << galerkin << '\n';
  return {pass, "train " + fmt(train_s) + " s; levels/dofs:sgmg/neural" + detail +
                    (parity ? "; exact parity" : "; parity not exact")};
}

Outcome criterion6(const fs::path& work, int per_class, int epochs, std::ostream& log) {
  const auto t0 = Clock::now();
  const auto dir = work / "models_2d";
  fs::create_directories(dir);
  for (std::size_t p : {7, 5, 4, 3}) {
    GenDataConfig g;
    g.dimension = 2;
    g.patch_size = p;
    g.n0 = 256;
    g.step = 32;
    g.class_count = 25;
    g.per_class = static_cast<std::size_t>(per_class);
    g.out = (work / ("data_d2_p" + std::to_string(p) + ".txt")).string();
    gen_and_train(g, (dir / ("model_d2_p" + std::to_string(p) + ".nmg")).string(), epochs, log);
  }
  const double train_s = seconds_since(t0);
  ModelSet ms;
  ms.dir = dir.string();
  const auto models = ms.load(2);

  bool pass = true;
  std::vector<int> sgmg;
  std::string detail;
  for (long n : {16, 32, 64}) {
    const ProblemConfig p{2, n, 0.0, 1, false};
    const SolverConfig s;
    const auto a = run_solve(Method::sgmg, p, s, models);
    const auto b = run_solve(Method::neural, p, s, models);
    const bool ok = a.converged && b.converged && b.iterations <= 2 * a.iterations;
    pass = pass && ok;
    sgmg.push_back(a.iterations);
    detail += " " + std::to_string(n + 1) + "x" + std::to_string(n + 1) + ":" + std::to_string(a.iterations) + "/" +
              std::to_string(b.iterations) + (ok ? "" : "!");
  }
  const int spread = *std::max_element(sgmg.begin(), sgmg.end()) - *std::min_element(sgmg.begin(), sgmg.end());
  pass = pass && spread <= 1;
  return {pass, "train " + fmt(train_s) + " s; mesh:sgmg/neural" + detail + "; sgmg spread " +
                    std::to_string(spread)};
}

Outcome criterion7() {
  // Only the manifests matter; a handful of records per class keeps this cheap.
  std::string detail;
  bool pass = true;
  const auto lin = generate_dataset({1, 3, kDefaultJitter}, ScheduleKind::linear, class_schedule_linear(10, 10, 20), 2, 1);
  const double r_lin = balance_diagnostic(lin.manifest).ratio;
  pass = pass && r_lin == 1.0;
  detail += "linear " + fmt(r_lin);
  for (long factor : {2, 4}) {
    for (long levels : {3, 4}) {
      const auto d = generate_dataset({1, 3, kDefaultJitter}, ScheduleKind::refinement,
                                      class_schedule_refinement(8, factor, levels), 2, 1);
      const double r = balance_diagnostic(d.manifest).ratio;
      const double need = std::pow(double(factor), double(levels - 2));
      pass = pass && r >= need;
      detail += "; f" + std::to_string(factor) + " L" + std::to_string(levels) + " " + fmt(r) + " (>= " + fmt(need) + ")";
    }
  }
  return {pass, detail};
}

Outcome criterion8(const fs::path& work, std::ostream& log) {
  BenchConfig bc;
  bc.problem.dimension = 1;
  bc.problem.jitter = kDefaultJitter;
  bc.sizes = {64, 128, 256, 512, 1024};
  bc.solver.levels = 3;
  bc.models.dir = (work / "models_1d").string();
  bc.out = (work / "bench_1d.csv").string();
  bc.data_dir = work.string();
  const int code = cmd_bench(bc, log);

  std::ifstream is(bc.out);
  std::string line;
  std::getline(is, line);
  bool pass = code == 0 && line.rfind(kSolveHeader, 0) == 0;
  std::size_t rows = 0;
  std::uint64_t neural_hits = 0;
  std::string times;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) f.push_back(c);
    if (f.size() < 10) return {false, "malformed row: " + line};
    ++rows;
    if (f[0] == "neural") neural_hits += std::stoull(f[8]);
    times += " " + f[0] + "@" + f[2] + "=" + f[7] + "ms";
  }
  pass = pass && rows == 2 * bc.sizes.size() && neural_hits == 0;
  log << "criterion 8 operator_ms:" << times << '\n';
  return {pass, std::to_string(rows) + " rows in " + bc.out + ", neural intersections " + std::to_string(neural_hits)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  int per_class_2d = 150, epochs_2d = 30;
  app.add_option("--workdir", workdir);
  app.add_option("--per-class-2d", per_class_2d, "records per class for the 2D datasets");
  app.add_option("--epochs-2d", epochs_2d);
  CLI11_PARSE(app, argc, argv);

  const fs::path work(workdir);
  fs::create_directories(work);
  std::ofstream log(work / "acceptance.log");

  bool all = true;
  const auto report = [&](int id, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
    all = all && o.pass;
  };
  const auto guarded = [&](auto&& f) -> Outcome {
    try {
      return f();
    } catch (const Error& e) {
      return {false, std::string("error: ") + e.what()};
    }
  };

  PairStats pairs;
  std::string pair_error;
  try {
    pairs = run_pairs();
  } catch (const Error& e) {
    pair_error = std::string("error: ") + e.what();
  }
  if (!pair_error.empty()) {
    report(1, "coupling oracle", {false, pair_error});
    report(2, "constant preservation", {false, pair_error});
  } else {
  report(1, "coupling oracle",
         {pairs.coupling_err <= 1e-12 && pairs.seconds < 60.0,
          std::to_string(pairs.pairs) + " pairs, max entry err " + fmt(pairs.coupling_err) + ", " +
              fmt(pairs.seconds) + " s"});
  report(2, "constant preservation",
         {pairs.constant_defect < 1e-12,
          std::to_string(pairs.pairs) + " pairs, max |Q1-1| " + fmt(pairs.constant_defect)});
  }
  report(3, "gradient check", guarded(criterion3));
  report(4, "plumbing equivalence", guarded(criterion4));
  report(5, "1D end-to-end", guarded([&] { return criterion5(work, log); }));
  report(6, "2D desk scale", guarded([&] { return criterion6(work, per_class_2d, epochs_2d, log); }));
  report(7, "dataset balance", guarded(criterion7));
  report(8, "operator timing", guarded([&] { return criterion8(work, log); }));
  return all ? 0 : 1;
}
