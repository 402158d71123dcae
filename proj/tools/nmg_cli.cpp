#include <CLI11.hpp>

#include <iostream>

#include "nmg/cli.hpp"

namespace {

using namespace nmg;
using namespace nmg::cli;

void add_problem_options(CLI::App* app, ProblemConfig& p) {
  app->add_option("--dim", p.dimension, "1 or 2")->check(CLI::IsMember({1, 2}));
  app->add_option("--jitter", p.jitter, "relative node jitter of the test mesh");
  app->add_option("--mesh-seed", p.mesh_seed, "seed of the test mesh jitter");
}

void add_solver_options(CLI::App* app, SolverConfig& s) {
  app->add_option("--levels", s.levels, "hierarchy depth")->check(CLI::Range(2, 12));
  app->add_option("--tol", s.tol, "relative residual tolerance");
  app->add_option("--max-iter", s.max_iter);
  app->add_option("--smoother", s.smoother.kind)
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, SmootherKind>{{"jacobi", SmootherKind::jacobi},
                                              {"gauss-seidel", SmootherKind::gauss_seidel}}));
  app->add_option("--pre-sweeps", s.smoother.pre_sweeps);
  app->add_option("--post-sweeps", s.smoother.post_sweeps);
  app->add_option("--omega", s.smoother.omega, "Jacobi damping");
  app->add_flag("--extend", s.extend, "2D: one size-7 model on a ghost-extended mesh");
  app->add_option("--features", s.features, "mass matrix fed to the model on coarse levels")
      ->transform(CLI::CheckedTransformer(std::map<std::string, FeatureSource>{
          {"galerkin", FeatureSource::galerkin}, {"assembled", FeatureSource::assembled}}));
}

void add_model_options(CLI::App* app, std::vector<std::string>& raw, ModelSet& models) {
  app->add_option("--model", raw, "size=path, repeatable");
  app->add_option("--models-dir", models.dir, "directory of model_d{dim}_p{size}.nmg files");
}

void collect_models(const std::vector<std::string>& raw, ModelSet& models) {
  for (const auto& s : raw) {
    auto [size, path] = parse_model_arg(s);
    models.paths[size] = path;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multigrid transfer operators by L2 projection or a trained MLP"};
  app.set_config("--config", "", "key=value config file");
  app.require_subcommand(1);

  GenDataConfig gen;
  std::string schedule = "linear";
  auto* g = app.add_subcommand("gen-data", "generate a patch-record dataset");
  g->add_option("--dim", gen.dimension)->check(CLI::IsMember({1, 2}));
  g->add_option("--patch-size", gen.patch_size, "patch-size family");
  g->add_option("--schedule", schedule)->check(CLI::IsMember({"linear", "refinement"}));
  g->add_option("--n0", gen.n0, "first class");
  g->add_option("--step", gen.step, "linear schedule increment");
  g->add_option("--classes", gen.class_count, "linear schedule class count");
  g->add_option("--factor", gen.factor, "refinement factor (2 or 4)");
  g->add_option("--ref-levels", gen.levels, "refinement schedule class count");
  g->add_option("--per-class", gen.per_class, "records per class");
  g->add_option("--seed", gen.seed);
  g->add_option("--jitter", gen.jitter);
  g->add_option("--out", gen.out)->required();

  TrainCommandConfig tr;
  auto* t = app.add_subcommand("train", "train an MLP on a dataset");
  t->add_option("--data", tr.data)->required();
  t->add_option("--out", tr.out)->required();
  t->add_option("--history", tr.history, "per-epoch loss CSV");
  t->add_option("--hidden", tr.hidden, "hidden layer widths")->delimiter(',');
  t->add_option("--epochs", tr.train.epochs);
  t->add_option("--batch-size", tr.train.batch_size);
  t->add_option("--lr", tr.train.lr);
  t->add_option("--lr-decay", tr.train.lr_decay, "per-epoch learning rate factor");
  t->add_option("--alpha", tr.train.loss.alpha);
  t->add_option("--beta", tr.train.loss.beta);
  t->add_option("--seed", tr.train.seed);
  t->add_option("--split-seed", tr.split_seed);
  bool freeze_biases = false;
  t->add_flag("--freeze-biases", freeze_biases, "hold biases at zero");

  SolveCommandConfig sv;
  std::string method = "sgmg";
  std::vector<std::string> solve_models;
  bool zero_rhs = false;
  auto* s = app.add_subcommand("solve", "solve Poisson with one multigrid hierarchy");
  s->add_option("--method", method)->check(CLI::IsMember({"sgmg", "neural"}));
  s->add_option("--n", sv.problem.n, "elements (1D) or cells per side (2D)");
  add_problem_options(s, sv.problem);
  add_solver_options(s, sv.solver);
  add_model_options(s, solve_models, sv.models);
  s->add_flag("--zero-rhs", zero_rhs);
  s->add_option("--out", sv.out, "CSV file instead of stdout");
  s->add_option("--history", sv.history_out, "residual history CSV");

  BenchConfig bc;
  std::vector<std::string> bench_models;
  auto* b = app.add_subcommand("bench", "SGMG vs neural sweep over mesh sizes");
  b->add_option("--sizes", bc.sizes, "n values")->delimiter(',')->required();
  add_problem_options(b, bc.problem);
  add_solver_options(b, bc.solver);
  add_model_options(b, bench_models, bc.models);
  b->add_option("--out", bc.out)->required();
  b->add_option("--data-dir", bc.data_dir, "where to write .dat curves");

  InspectConfig in;
  auto* i = app.add_subcommand("inspect", "summarize a mesh, matrix, dataset or model file");
  i->add_option("--mesh", in.mesh);
  i->add_option("--matrix", in.matrix);
  i->add_option("--dataset", in.dataset);
  i->add_option("--model", in.model);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) {
      gen.schedule = schedule == "linear" ? ScheduleKind::linear : ScheduleKind::refinement;
      return cmd_gen_data(gen, std::cout);
    }
    if (t->parsed()) {
      tr.train.train_biases = !freeze_biases;
      return cmd_train(tr, std::cout);
    }
    if (s->parsed()) {
      sv.method = method == "sgmg" ? Method::sgmg : Method::neural;
      sv.problem.zero_rhs = zero_rhs;
      collect_models(solve_models, sv.models);
      return cmd_solve(sv, std::cout, std::cerr);
    }
    if (b->parsed()) {
      collect_models(bench_models, bc.models);
      return cmd_bench(bc, std::cerr);
    }
    return cmd_inspect(in, std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
