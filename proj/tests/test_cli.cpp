#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <shapeflow/commands.hpp>

#include "support.hpp"

using namespace shapeflow;
namespace fs = std::filesystem;

namespace {

const std::string small_config = R"([domain]
type = rectangle
x0 = -1
x1 = 0
y0 = -0.5
y1 = 0.5
h = 0.06
outer_region = trunk

[initial]
loop1 = lungs circle -0.5 0 0.2

[target]
loop1 = lungs ellipse -0.5 0.05 0.25 0.15 0.3
reference = ref/reference.json

[scenario]
kappa.trunk = truncnormal 1 1e-4 0.7 1.3
kappa.lungs = truncnormal 0.005 1e-4 2.5e-3 7.5e-3
g = 10

[optimizer]
nu = 1e-6
schedule = robbins_monro 0.016
mu_min = 5
mu_max = 17
iterations = 1
seed = 1
checkpoint_stride = 1

[output]
dir = out
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  if (pos == std::string::npos) throw std::logic_error("pattern not found: " + from);
  return s.replace(pos, from.size(), to);
}

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

// Runs the CLI inside `dir` and returns its exit status.
int cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" SHAPEFLOW_CLI "' " + args + " >cli.out 2>cli.err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path with_config(const std::string& name, const std::string& text) {
  const auto dir = testing_support::scratch_dir(name);
  std::ofstream(dir / "run.ini") << text;
  return dir;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST(Config, ParsesTheSmallRun) {
  const RunConfig cfg = parse(small_config);
  EXPECT_EQ(cfg.h, 0.06);
  EXPECT_EQ(cfg.outer_region, "trunk");
  ASSERT_EQ(cfg.initial_loops.size(), 1u);
  EXPECT_EQ(cfg.initial_loops[0].region, "lungs");
  EXPECT_EQ(cfg.optimizer.scenarios.kappa.size(), 2u);
  EXPECT_EQ(std::get<double>(cfg.optimizer.scenarios.g.value), 10.0);
  const auto& tn = std::get<TruncatedNormalSpec>(cfg.optimizer.scenarios.kappa.at("lungs"));
  EXPECT_EQ(tn.rho, 0.005);
  EXPECT_EQ(tn.b, 7.5e-3);
  EXPECT_EQ(cfg.optimizer.schedule(2), 0.008);
  EXPECT_EQ(cfg.optimizer.restriction.mode, Restriction::Mode::interface_band);
  EXPECT_EQ(cfg.optimizer.output_dir, "out");
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"single_shape.ini", "multi_shape.ini"}) {
    const RunConfig cfg = load_config(fs::path(SHAPEFLOW_SOURCE_DIR) / "configs" / name);
    EXPECT_GT(cfg.optimizer.iterations, 0u) << name;
    EXPECT_FALSE(cfg.target_loops.empty()) << name;
  }
}

TEST(Config, RejectsMistakes) {
  EXPECT_THROW(parse(small_config + "\n[bogus]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "seed = 1", "sed = 1")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "h = 0.06", "h = fine")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "h = 0.06", "h = -1")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "schedule = robbins_monro 0.016\n", "")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "robbins_monro 0.016", "power 1 0.4")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "g = 10\n", "")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "truncnormal 1 1e-4 0.7 1.3", "truncnormal 1 1e-4 1.3 0.7")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "lungs circle -0.5 0 0.2", "lungs square 1")), ConfigError);
  EXPECT_THROW(parse(replace(small_config, "mu_min = 5", "mu_min = 50")), ConfigError);
}

TEST(Cli, UsageErrorsExitWithTwo) {
  const auto dir = with_config("cli_usage", small_config);
  EXPECT_EQ(cli(dir, ""), commands::exit_config);
  EXPECT_EQ(cli(dir, "frobnicate run.ini"), commands::exit_config);
  EXPECT_EQ(cli(dir, "optimize"), commands::exit_config);
  EXPECT_EQ(cli(dir, "optimize missing.ini"), commands::exit_config);
  EXPECT_EQ(cli(dir, "optimize run.ini --iterations -3"), commands::exit_config);
  EXPECT_EQ(cli(dir, "--help"), commands::exit_ok);
}

TEST(Cli, InvalidConfigAndGeometryExitWithTwo) {
  const auto bad_key = with_config("cli_bad_key", replace(small_config, "seed = 1", "sede = 1"));
  EXPECT_EQ(cli(bad_key, "gen-mesh run.ini"), commands::exit_config);
  const auto overlap = with_config("cli_overlap", replace(small_config, "lungs circle -0.5 0 0.2",
                                                          "lungs circle -0.5 0 0.2\nloop2 = lungs circle -0.4 0 0.2"));
  EXPECT_EQ(cli(overlap, "gen-mesh run.ini"), commands::exit_config);
  EXPECT_NE(std::ifstream(overlap / "cli.err").peek(), EOF);
}

TEST(Cli, OptimizeNeedsReference) {
  const auto dir = with_config("cli_no_reference", small_config);
  EXPECT_EQ(cli(dir, "optimize run.ini"), commands::exit_config);
}

TEST(Cli, SmokeRunProducesOneLogRow) {
  const auto dir = with_config("cli_smoke", small_config);
  ASSERT_EQ(cli(dir, "gen-mesh run.ini -o initial.msh --vtk initial.vtk"), commands::exit_ok);
  EXPECT_TRUE(fs::exists(dir / "initial.msh"));
  EXPECT_TRUE(fs::exists(dir / "initial.vtk"));
  ASSERT_EQ(cli(dir, "gen-target run.ini"), commands::exit_ok);
  EXPECT_TRUE(fs::exists(dir / "ref/reference.json"));
  EXPECT_TRUE(fs::exists(dir / "ref/reference.msh"));
  ASSERT_EQ(cli(dir, "optimize run.ini"), commands::exit_ok);
  EXPECT_EQ(line_count(dir / "out/log.csv"), 2u);
  EXPECT_EQ(line_count(dir / "out/timing.csv"), 2u);
  for (const char* f : {"report.json", "objective.svg", "deformation.svg", "checkpoint_000000.msh",
                        "checkpoint_000001.msh", "checkpoint_000001.json", "checkpoint_000001.vtk"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  ASSERT_EQ(cli(dir, "optimize run.ini --iterations 2 --seed 4 --out other"), commands::exit_ok);
  EXPECT_EQ(line_count(dir / "other/log.csv"), 3u);
}

TEST(Cli, CheckGradientWritesTable) {
  const auto dir = with_config("cli_fd", small_config + "\n[fd_check]\nt = 1e-3 1e-4\n");
  ASSERT_EQ(cli(dir, "gen-target run.ini"), commands::exit_ok);
  ASSERT_EQ(cli(dir, "check-gradient run.ini -o fd.csv"), commands::exit_ok);
  EXPECT_EQ(line_count(dir / "fd.csv"), 3u);
}

TEST(Cli, ZeroFluxGivesZeroReference) {
  const auto dir = with_config("cli_zero_flux", replace(small_config, "g = 10", "g = 0"));
  ASSERT_EQ(cli(dir, "gen-target run.ini"), commands::exit_ok);
  const auto [mesh, ybar] = read_reference(dir / "ref/reference.json");
  EXPECT_EQ(ybar.size(), mesh.node_count());
  EXPECT_EQ(ybar.values.cwiseAbs().maxCoeff(), 0.0);
}
