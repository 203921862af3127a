#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace shapeopt;
using namespace shapeopt::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("shapeopt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ProblemConfig square_config() {
  ProblemConfig c;
  c.geometry = unit_square_polygon({BoundaryTag::Dirichlet, BoundaryTag::Free, BoundaryTag::Free, BoundaryTag::Free});
  c.volume_target = 0.5;
  c.h = 0.2;
  c.order = 1;
  return c;
}

ProblemConfig tiny_bridge(CostMode mode, int iterations) {
  ProblemConfig c = builtin_problem("bridge");
  c.h = 1.0;
  c.order = 1;
  c.mode = mode;
  c.iterations = iterations;
  c.snapshot_every = 1;
  return c;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(SHAPEOPT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Builtin, Problems) {
  const auto l = builtin_problem("l_bracket");
  EXPECT_EQ(l.volume_target, 4480.0);
  EXPECT_NEAR(l.geometry.area(), 6400.0, 6400.0 * 1e-12);
  EXPECT_EQ(l.p, 6.0);
  EXPECT_EQ(l.gamma1, 1e-4);
  EXPECT_EQ(l.rho_low, 1e-2);
  EXPECT_EQ(l.radius, 100.0);
  EXPECT_EQ(l.order, 3);
  const auto b = builtin_problem("bridge");
  EXPECT_EQ(b.volume_target, 13.3);
  EXPECT_NEAR(b.geometry.area(), 19.0, 19.0 * 1e-12);
  EXPECT_EQ(b.p, 2.0);
  EXPECT_EQ(b.gamma1, 1e-2);
  EXPECT_EQ(b.rho_low, 10.0);
  EXPECT_EQ(b.radius, 7.5);
  EXPECT_NO_THROW(l.validate());
  EXPECT_NO_THROW(b.validate());
}

TEST(Builtin, UnknownNameListsValidOnes) {
  try {
    builtin_problem("hook");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("l_bracket"), std::string::npos);
    EXPECT_NE(m.find("bridge"), std::string::npos);
  }
}

TEST(Config, RoundTripReproducesBuiltins) {
  for (const auto& name : builtin_names()) {
    const ProblemConfig c = builtin_problem(name);
    std::istringstream in(format_config(c));
    EXPECT_TRUE(parse_config(in) == c) << name;
  }
}

TEST(Config, DefaultsAndRejections) {
  const std::string base =
      "volume_target = 0.5\ntraction = 0 -1\ngamma1 = 1\ngamma2 = 1\np = 2\nrho_low = 1\nradius = 0.3\n"
      "h = 0.2\norder = 1\ngeometry outer\n0 0 DIRICHLET\n1 0 FREE\n1 1 NEUMANN\n0 1 FREE\nend\n";
  {
    std::istringstream in(base);
    const ProblemConfig c = parse_config(in);
    EXPECT_EQ(c.c_step, 0.3);
    EXPECT_EQ(c.deformation_order, 1);
    EXPECT_EQ(c.poisson_ratio, 0.3);
  }
  {
    std::istringstream in(base + "poisson_ratio = 0.6\n");
    EXPECT_THROW(parse_config(in), ConfigError);
  }
  {
    std::istringstream in("volume_target = 0.5\nvolume_target = 0.6\n");
    EXPECT_THROW(parse_config(in), ConfigError);
  }
  {
    std::istringstream in(base.substr(base.find("traction")));
    EXPECT_THROW(parse_config(in), ConfigError);  // volume_target missing
  }
  {
    std::istringstream in("geometry outer\n0 0 DIRICHLET\n1 0 FREE\n1 0 FREE\nend\n");
    try {
      parse_config(in, "x.cfg");
      FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("x.cfg:"), std::string::npos) << e.what();
    }
  }
}

TEST(FdCheck, VolumeSlopeOnTenSeeds) {
  const ProblemConfig c = square_config();
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const FdReport rep = fd_check(c, Functional::Vol, seed, {3e-2, 1e-2, 3e-3, 1e-3, 1e-4, 1e-5});
    ASSERT_FALSE(rep.rows.empty());
    ASSERT_EQ(rep.rows.back().t, 1e-5);
    EXPECT_GE(rep.slope, 1.8) << "seed " << seed;
    EXPECT_LE(rep.rows.back().rel_error, 1e-6) << "seed " << seed;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) EXPECT_LT(rep.rows[i].t, rep.rows[i - 1].t);
  }
}

TEST(FdCheck, ZeroFieldGivesZeroDifferences) {
  // One-triangle-deep mesh: every vertex lies on the clamped boundary.
  ProblemConfig c = square_config();
  c.geometry = unit_square_polygon({BoundaryTag::Dirichlet, BoundaryTag::Dirichlet, BoundaryTag::Dirichlet,
                                    BoundaryTag::Dirichlet});
  c.h = 2.0;
  for (Functional f : {Functional::Vol, Functional::MaxNorm}) {
    const FdReport rep = fd_check(c, f, 1, {1e-2, 1e-3});
    for (const auto& r : rep.rows) {
      EXPECT_EQ(r.central, 0.0);
      EXPECT_EQ(r.forward, 0.0);
      EXPECT_EQ(r.analytic, 0.0);
    }
  }
}

TEST(FdCheck, InvertingStepsAreDropped) {
  const ProblemConfig c = square_config();
  const FdReport rep = fd_check(c, Functional::Vol, 2, {100.0, 1e-3});
  ASSERT_EQ(rep.dropped.size(), 1u);
  EXPECT_EQ(rep.dropped[0], 100.0);
  EXPECT_EQ(rep.rows.size(), 1u);
}

TEST(FdCheck, SlopeNeedsThreeDecreasingRows) {
  std::vector<FdRow> rows(2);
  rows[0].t = 1e-1;
  rows[0].abs_error = 1e-2;
  rows[1].t = 1e-2;
  rows[1].abs_error = 1e-4;
  EXPECT_TRUE(std::isnan(fd_slope(rows)));
  rows.push_back(rows[1]);
  rows[2].t = 1e-3;
  rows[2].abs_error = 1e-6;
  EXPECT_NEAR(fd_slope(rows), 2.0, 1e-12);
  // A rounding-dominated tail that still decreases slowly is left out.
  rows.push_back(rows[2]);
  rows[3].t = 1e-4;
  rows[3].abs_error = 5e-7;
  EXPECT_NEAR(fd_slope(rows), 2.0, 1e-12);
  EXPECT_THROW(fd_check(square_config(), Functional::Vol, 1, {}), ConfigError);
  EXPECT_THROW(fd_check(square_config(), Functional::Vol, 1, {-1e-3}), ConfigError);
}

TEST(FdCheck, FunctionalNames) {
  for (Functional f : {Functional::Vol, Functional::PNorm, Functional::MaxNorm})
    EXPECT_EQ(parse_functional(to_string(f)), f);
  EXPECT_THROW(parse_functional("AREA"), ConfigError);
}

TEST(RandomField, AdmissibleAndSeeded) {
  const TriMesh m = generate_mesh(builtin_problem("l_bracket").geometry, 10.0);
  const auto a = random_admissible_field(m, 5), b = random_admissible_field(m, 5), c = random_admissible_field(m, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  const auto fixed = m.vertices_with_tags({BoundaryTag::Dirichlet, BoundaryTag::Neumann});
  for (int v = 0; v < m.num_vertices(); ++v)
    if (fixed[v]) {
      EXPECT_EQ(a[v], Vec2::Zero());
    }
}

class Archived : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    max_run = new RunResult(run_optimization(tiny_bridge(CostMode::MaxNorm, 2)));
    p_run = new RunResult(run_optimization(tiny_bridge(CostMode::PNorm, 2)));
  }
  static void TearDownTestSuite() {
    delete max_run;
    delete p_run;
  }
  static RunResult* max_run;
  static RunResult* p_run;
};

RunResult* Archived::max_run = nullptr;
RunResult* Archived::p_run = nullptr;

TEST_F(Archived, CompareIsSymmetric) {
  const auto ab = compare_runs(*max_run, *p_run, {2, 0});
  const auto ba = compare_runs(*p_run, *max_run, {0, 2});
  ASSERT_EQ(ab.rows.size(), 2u);
  ASSERT_EQ(ba.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(ab.rows[i].checkpoint, ba.rows[i].checkpoint);
    EXPECT_EQ(ab.rows[i].h_min, ba.rows[i].h_min);
    EXPECT_EQ(ab.rows[i].peak_a, ba.rows[i].peak_b);
    EXPECT_EQ(ab.rows[i].peak_b, ba.rows[i].peak_a);
  }
  EXPECT_EQ(ab.rows[0].checkpoint, 0);
  // Both runs start from the same shape.
  EXPECT_EQ(ab.rows[0].peak_a, ab.rows[0].peak_b);
}

TEST_F(Archived, CompareIdenticalRunsAndMissingSnapshots) {
  const auto t = compare_runs(*max_run, *max_run, {1, 2, 7}, true);
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& r : t.rows) EXPECT_EQ(r.peak_a, r.peak_b);
  EXPECT_EQ(t.rows[0].h_min, t.rows[1].h_min);
  ASSERT_EQ(t.warnings.size(), 1u);
  EXPECT_NE(t.warnings[0].find("checkpoint 7"), std::string::npos);
}

TEST_F(Archived, HistoryCsvShape) {
  std::ostringstream os;
  write_history_csv(os, *max_run);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iter,j_vol,j_sigma_max,j_p,total,stationarity,step,remeshed,n_active,max_sigma_sq");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST_F(Archived, RemeshFlagsAppearInTheirRows) {
  RunResult r = *p_run;
  r.records[0].remeshed = true;
  r.records[2].remeshed = true;
  std::ostringstream os;
  write_history_csv(os, r);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  int flagged = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    ASSERT_EQ(cols.size(), 10u);
    flagged += cols[7] == "1";
  }
  EXPECT_EQ(flagged, 2);
}

TEST_F(Archived, SaveLoadAndDeterministicExport) {
  const fs::path a = scratch_dir("run_a"), b = scratch_dir("run_b");
  save_run(*max_run, a);
  save_run(run_optimization(tiny_bridge(CostMode::MaxNorm, 2)), b);
  EXPECT_EQ(read_file(a / "history.csv"), read_file(b / "history.csv"));
  EXPECT_TRUE(fs::exists(a / "cost.svg"));
  const RunResult loaded = load_run(a);
  EXPECT_TRUE(loaded.config == max_run->config);
  ASSERT_EQ(loaded.snapshots.size(), max_run->snapshots.size());
  for (const auto& [iter, mesh] : max_run->snapshots) EXPECT_EQ(loaded.snapshots.at(iter).vertices(), mesh.vertices());
  const auto t = compare_runs(loaded, *max_run, {2});
  EXPECT_EQ(t.rows.at(0).peak_a, t.rows.at(0).peak_b);
}

TEST(Export, SingleIterationAndErrors) {
  const RunResult r = run_optimization(tiny_bridge(CostMode::PNorm, 0));
  const fs::path d = scratch_dir("single");
  export_plots(r, d);
  const std::string csv = read_file(d / "history.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_THROW(export_plots(RunResult{}, d), Error);
  EXPECT_THROW(export_plots(r, "/proc/shapeopt_cannot_write_here"), Error);
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch_dir("cli");
  EXPECT_EQ(cli("mesh-info --problem l_bracket --meshsize 20"), 0);
  EXPECT_EQ(cli("mesh-info --problem hook"), 2);
  EXPECT_EQ(cli("mesh-info --no-such-flag"), 2);
  EXPECT_EQ(cli(""), 2);

  ProblemConfig unloaded = square_config();
  unloaded.traction = Vec2::Zero();
  save_config(unloaded, (d / "unloaded.cfg").string());
  EXPECT_EQ(cli("fd-check --config " + (d / "unloaded.cfg").string() + " --functional VOL --t-list 1e-2,1e-3"), 0);
  EXPECT_EQ(cli("fd-check --config " + (d / "unloaded.cfg").string() + " --functional PNORM"), 3);

  std::ofstream(d / "inverted.msh") << "shapeopt-mesh 1\nh_target 1\nvertices 3\n0 0 0\n1 0 1\n2 1 0\n"
                                       "triangles 1\n0 0 1 2\nboundary 0\nend\n";
  EXPECT_EQ(cli("mesh-info --mesh " + (d / "inverted.msh").string()), 4);

  const std::string out = (d / "run").string();
  EXPECT_EQ(cli("run --problem bridge --meshsize 1 --order 1 --iters 1 --mode p --quiet --out " + out), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "history.csv"));
  EXPECT_EQ(cli("compare --run-a " + out + " --run-b " + out + " --checkpoints 0,1"), 0);
  EXPECT_EQ(cli("run --problem bridge --mode q"), 2);
}
