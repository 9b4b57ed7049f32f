// Command-line driver: mesh and target generation, optimization runs and
// verification studies.

#include <iostream>

#include <CLI11.hpp>

#include <shapeflow/commands.hpp>

namespace cmd = shapeflow::commands;

int main(int argc, char** argv) {
  CLI::App app{"Stochastic shape optimization for interface identification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "run configuration (INI)")->required();
  };

  auto* gen_mesh = app.add_subcommand("gen-mesh", "generate the initial (or target) mesh");
  gen_mesh->set_help_flag("--help", "print this help message and exit");
  add_config(gen_mesh);
  cmd::GenMeshOptions mesh_opt;
  std::string msh_out = "mesh.msh", vtk_out;
  double h_override = 0.0;
  gen_mesh->add_flag("--target", mesh_opt.target, "mesh the target loops");
  gen_mesh->add_option("--h", h_override, "target edge length, overrides the config");
  gen_mesh->add_option("-o,--output", msh_out, "Gmsh output file");
  gen_mesh->add_option("--vtk", vtk_out, "also write a VTK file");

  auto* gen_target = app.add_subcommand("gen-target", "solve for the reference data ybar");
  add_config(gen_target);
  std::string reference_out;
  gen_target->add_option("-o,--output", reference_out, "reference file, overrides target.reference");

  auto* optimize = app.add_subcommand("optimize", "run the stochastic gradient method");
  add_config(optimize);
  long iterations = -1;
  long long seed = -1;
  optimize->add_option("--out", out_dir, "output directory, overrides output.dir");
  optimize->add_option("--iterations", iterations, "iteration count, overrides the config")->check(CLI::NonNegativeNumber);
  optimize->add_option("--seed", seed, "random seed, overrides the config")->check(CLI::NonNegativeNumber);

  auto* check = app.add_subcommand("check-gradient", "compare the shape derivative with difference quotients");
  add_config(check);
  std::string fd_out = "fd_check.csv";
  check->add_option("-o,--output", fd_out, "CSV output");

  auto* lip = app.add_subcommand("lipschitz", "Lipschitz quotients and second moments along a run");
  add_config(lip);
  lip->add_option("--run", out_dir, "run directory, defaults to output.dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cmd::exit_ok : cmd::exit_config;
  }

  try {
    auto cfg = shapeflow::load_config(config_path);
    if (!out_dir.empty()) cfg.optimizer.output_dir = out_dir;
    if (*gen_mesh) {
      mesh_opt.output = msh_out;
      mesh_opt.vtk = vtk_out;
      if (gen_mesh->count("--h")) mesh_opt.h = h_override;
      cmd::gen_mesh(cfg, mesh_opt, std::cout);
    } else if (*gen_target) {
      if (!reference_out.empty()) cfg.reference = reference_out;
      cmd::gen_target(cfg, std::cout);
    } else if (*optimize) {
      if (iterations >= 0) cfg.optimizer.iterations = static_cast<std::size_t>(iterations);
      if (seed >= 0) cfg.optimizer.seed = static_cast<std::uint64_t>(seed);
      const auto report = cmd::optimize(cfg, std::cout);
      if (report.reason == shapeflow::Termination::mesh_failure) return cmd::exit_runtime;
    } else if (*check) {
      cmd::check_gradient(cfg, fd_out, std::cout);
    } else if (*lip) {
      cmd::lipschitz(cfg, cfg.optimizer.output_dir, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmd::exit_code_for(e);
  }
  return cmd::exit_ok;
}
