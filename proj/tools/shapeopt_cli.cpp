// shapeopt command-line front end.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 solver failure,
// 4 geometry failure, 1 anything else.

#include "shapeopt/shapeopt.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace shapeopt;

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kSolver = 3, kGeometry = 4 };

struct ProblemOptions {
  std::string problem;
  std::string config;
  double h = 0.0;
  int order = 0;

  void add_to(CLI::App* app) {
    auto* p = app->add_option("--problem", problem, "built-in problem (l_bracket, bridge)");
    auto* c = app->add_option("--config", config, "problem config file")->check(CLI::ExistingFile);
    p->excludes(c);
    app->add_option("--meshsize", h, "override the initial meshsize h")->check(CLI::PositiveNumber);
    app->add_option("--order", order, "override the state polynomial order")->check(CLI::Range(1, 3));
  }

  ProblemConfig resolve() const {
    if (problem.empty() && config.empty()) throw ConfigError("one of --problem or --config is required");
    ProblemConfig cfg = config.empty() ? builtin_problem(problem) : load_config(config);
    if (h > 0.0) cfg.h = h;
    if (order > 0) cfg.order = order;
    return cfg;
  }
};

CostMode parse_mode(const std::string& s) {
  if (s == "max" || s == "MAX_NORM") return CostMode::MaxNorm;
  if (s == "p" || s == "P_NORM") return CostMode::PNorm;
  throw ConfigError("unknown mode '" + s + "'; valid: max, p");
}

int cmd_run(const ProblemOptions& po, const std::string& mode, int iters, const std::string& out, bool quiet) {
  ProblemConfig cfg = po.resolve();
  if (!mode.empty()) cfg.mode = parse_mode(mode);
  if (iters >= 0) cfg.iterations = iters;
  using detail::format_double;
  const auto result = run_optimization(cfg, [&](const IterationRecord& r) {
    if (quiet) return;
    std::cout << "iter " << r.iter << " area " << format_double(r.cost.area) << " total "
              << format_double(r.cost.total) << " max_sigma_sq " << format_double(r.cost.max_sigma_sq)
              << " stationarity " << format_double(r.stationarity) << " step " << format_double(r.step)
              << (r.remeshed ? " remeshed" : "") << "\n";
  });
  if (!out.empty()) save_run(result, out);
  std::cout << "status " << to_string(result.status) << "\n";
  if (result.status == RunResult::Status::Aborted) {
    std::cerr << "aborted: " << result.message << "\n";
    return kGeometry;
  }
  return kOk;
}

int cmd_fd(const ProblemOptions& po, const std::string& functional, unsigned seed, const std::vector<double>& t_list) {
  const ProblemConfig cfg = po.resolve();
  const FdReport rep = fd_check(cfg, parse_functional(functional), seed, t_list);
  write_fd_report(std::cout, rep);
  std::cout << "# slope " << detail::format_double(rep.slope) << "\n";
  for (double t : rep.dropped) std::cout << "# dropped t=" << detail::format_double(t) << " (inversion)\n";
  return kOk;
}

int cmd_compare(const std::string& a, const std::string& b, const std::vector<int>& checkpoints, bool uniform) {
  const ComparisonTable table = compare_runs(load_run(a), load_run(b), checkpoints, uniform);
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
  write_comparison(std::cout, table);
  return kOk;
}

void print_mesh_info(const TriMesh& mesh) {
  using detail::format_double;
  const auto q = mesh_quality(mesh);
  int counts[3] = {0, 0, 0};
  for (const auto& e : mesh.boundary_edges()) ++counts[static_cast<int>(e.tag)];
  std::cout << "vertices " << mesh.num_vertices() << "\n"
            << "triangles " << mesh.num_triangles() << "\n"
            << "area " << format_double(mesh.area()) << "\n"
            << "h_target " << format_double(mesh.h_target()) << "\n"
            << "min_edge_length " << format_double(mesh.min_edge_length()) << "\n"
            << "min_element_size " << format_double(mesh.min_element_size()) << "\n"
            << "min_quality " << format_double(q.min_ratio) << "\n"
            << "boundary_edges DIRICHLET " << counts[0] << " NEUMANN " << counts[1] << " FREE " << counts[2] << "\n";
}

int cmd_mesh_info(const ProblemOptions& po, const std::string& mesh_file) {
  if (!mesh_file.empty()) {
    print_mesh_info(load_mesh(mesh_file));
    return kOk;
  }
  const ProblemConfig cfg = po.resolve();
  print_mesh_info(generate_mesh(cfg.geometry, cfg.h));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape optimization of linear elastic bodies against peak von Mises stress"};
  app.require_subcommand(1);

  ProblemOptions run_po, fd_po, info_po;
  std::string mode, out;
  int iters = -1;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run the descent loop and archive the result");
  run_po.add_to(run);
  run->add_option("--mode", mode, "max or p (default: from the config)");
  run->add_option("--iters", iters, "number of iterations N_max")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out, "output directory for CSV, SVG, config and snapshots");
  run->add_flag("--quiet", quiet, "suppress per-iteration lines");

  std::string functional = "VOL";
  unsigned seed = 1;
  std::vector<double> t_list{1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
  auto* fd = app.add_subcommand("fd-check", "compare shape derivatives with finite differences");
  fd_po.add_to(fd);
  fd->add_option("--functional", functional, "VOL, PNORM or MAXNORM");
  fd->add_option("--seed", seed, "seed of the random admissible field");
  fd->add_option("--t-list", t_list, "step sizes")->delimiter(',');

  std::string run_a, run_b;
  std::vector<int> checkpoints;
  bool uniform = false;
  auto* cmp = app.add_subcommand("compare", "peak stress of two archived runs on common meshes");
  cmp->add_option("--run-a", run_a, "first run directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--run-b", run_b, "second run directory")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--checkpoints", checkpoints, "iterations to compare")->required()->delimiter(',');
  cmp->add_flag("--uniform-h", uniform, "use one meshsize for all checkpoints");

  std::string mesh_file;
  auto* info = app.add_subcommand("mesh-info", "statistics of an initial or archived mesh");
  info_po.add_to(info);
  info->add_option("--mesh", mesh_file, "mesh snapshot file")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*run) return cmd_run(run_po, mode, iters, out, quiet);
    if (*fd) return cmd_fd(fd_po, functional, seed, t_list);
    if (*cmp) return cmd_compare(run_a, run_b, checkpoints, uniform);
    if (*info) return cmd_mesh_info(info_po, mesh_file);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kSolver;
  } catch (const GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return kGeometry;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
