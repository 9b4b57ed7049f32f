#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <spdlog/fmt/fmt.h>

#include "config.hpp"
#include "diagnostics.hpp"
#include "elasticity.hpp"
#include "mesh_io.hpp"
#include "optimizer.hpp"
#include "shape_calculus.hpp"
#include "svg_plot.hpp"

namespace shapeflow::commands {

/// Exit codes shared by every subcommand.
inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_runtime = 3;

/// Maps an exception thrown by a command to its exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const GeometryError*>(&e) ||
      dynamic_cast<const ParseError*>(&e))
    return exit_config;
  return exit_runtime;
}

inline std::string quality_summary(const Mesh& mesh) {
  const auto q = mesh_quality(mesh);
  return fmt::format(
      "nodes {}  triangles {}  loops {}\nmin angle {:.2f} deg  max aspect {:.3f}  min area {:.3e}  inverted {}  "
      "min interface segment {:.3e}",
      mesh.node_count(), mesh.triangle_count(), mesh.loops().size(), q.min_angle * 180.0 / std::numbers::pi,
      q.max_aspect_ratio, q.min_area, q.inverted_count, q.min_interface_segment);
}

// --- gen-mesh ------------------------------------------------------------------

struct GenMeshOptions {
  bool target = false;       ///< mesh the target loops instead of the initial ones
  std::optional<double> h;   ///< overrides the configured edge length
  std::filesystem::path output;
  std::filesystem::path vtk;
};

inline Mesh gen_mesh(RunConfig cfg, const GenMeshOptions& opt, std::ostream& out) {
  if (opt.h) {
    if (!(*opt.h > 0.0)) throw ConfigError("--h must be positive");
    cfg.h = *opt.h;
    cfg.target_h = 0.0;
  }
  const Mesh mesh = opt.target ? target_mesh(cfg) : initial_mesh(cfg);
  if (!opt.output.empty()) write_msh(mesh, opt.output);
  if (!opt.vtk.empty()) write_vtk(mesh, {}, opt.vtk);
  out << quality_summary(mesh) << "\n";
  return mesh;
}

// --- gen-target ------------------------------------------------------------------

/// Solves the state equation on the target mesh at the mean scenario (every
/// random coefficient replaced by ρ) and stores ȳ with its mesh.
inline ScalarField gen_target(const RunConfig& cfg, std::ostream& out) {
  const Mesh mesh = target_mesh(cfg);
  const Scenario scenario = mean_scenario(cfg.optimizer.scenarios);
  const ScalarField ybar = solve_state(mesh, scenario);
  write_reference(cfg.reference, mesh, ybar);
  auto vtk = cfg.reference;
  vtk.replace_extension(".vtk");
  write_vtk(mesh, {{"ybar", ybar}}, vtk);
  out << quality_summary(mesh) << "\n"
      << fmt::format("ybar range [{:.6g}, {:.6g}] written to {}\n", ybar.values.minCoeff(), ybar.values.maxCoeff(),
                     cfg.reference.string());
  return ybar;
}

inline std::unique_ptr<ReferenceField> load_reference(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.reference))
    throw ConfigError("reference field " + cfg.reference.string() + " not found (run gen-target first)");
  auto [mesh, ybar] = read_reference(cfg.reference);
  return std::make_unique<ReferenceField>(std::move(mesh), std::move(ybar));
}

// --- optimize --------------------------------------------------------------------

inline void write_run_plots(const std::filesystem::path& dir, const std::vector<LogRow>& log) {
  PlotSeries j{"J(u_n, xi_n)", {}, {}}, v{"|V_n|_H1", {}, {}};
  for (const auto& r : log) {
    j.x.push_back(static_cast<double>(r.n));
    j.y.push_back(r.J);
    v.x.push_back(static_cast<double>(r.n));
    v.y.push_back(r.V_h1);
  }
  write_svg_plot(dir / "objective.svg", {j}, {"Objective", "iteration n", "J", true, true});
  write_svg_plot(dir / "deformation.svg", {v}, {"Deformation norm", "iteration n", "H1 norm of V", true, true});
}

/// Runs the optimizer, then writes plots and report.json. Logs and
/// checkpoints are written by `run` into the configured output directory.
inline RunReport optimize(const RunConfig& cfg, std::ostream& out) {
  const auto reference = load_reference(cfg);
  const Mesh mesh = initial_mesh(cfg);
  const RunReport report = run(mesh, cfg.optimizer, *reference);
  const auto& dir = cfg.optimizer.output_dir;
  write_run_plots(dir, report.log);
  nlohmann::json j;
  j["termination"] = to_string(report.reason);
  j["iterations"] = report.log.size();
  j["wall_seconds"] = report.wall_seconds;
  j["seed"] = cfg.optimizer.seed;
  int retries = 0;
  for (const auto& r : report.log) retries += r.retries;
  j["retries"] = retries;
  write_text(dir / "report.json", j.dump(2) + "\n");
  out << fmt::format("{} iterations, termination {}, {} step halvings, {:.1f} s\n", report.log.size(),
                     to_string(report.reason), retries, report.wall_seconds);
  if (!report.log.empty())
    out << fmt::format("J first {:.6g} last {:.6g}\n", report.log.front().J, report.log.back().J);
  return report;
}

// --- check-gradient --------------------------------------------------------------

struct GradientCheck {
  std::vector<FdRow> rows;
  double min_rel_err = 0.0;
  double slope = 0.0;  ///< log-log slope of abs_err against t before the plateau
};

/// Rows where the error is still shrinking with t (sorted by decreasing t);
/// the branch ends at the first row whose error fails to drop.
inline std::vector<std::size_t> pre_plateau(const std::vector<FdRow>& rows) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].valid) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return rows[a].t > rows[b].t; });
  std::vector<std::size_t> branch;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k > 0 && !(rows[idx[k]].abs_err < rows[idx[k - 1]].abs_err)) break;
    branch.push_back(idx[k]);
  }
  return branch;
}

inline GradientCheck summarize(std::vector<FdRow> rows) {
  GradientCheck g;
  g.rows = std::move(rows);
  g.min_rel_err = INFINITY;
  for (const auto& r : g.rows)
    if (r.valid) g.min_rel_err = std::min(g.min_rel_err, r.rel_err);
  std::vector<double> t, e;
  for (auto i : pre_plateau(g.rows)) {
    t.push_back(g.rows[i].t);
    e.push_back(g.rows[i].abs_err);
  }
  g.slope = loglog_slope(t, e);
  return g;
}

inline std::string fd_csv(const std::vector<FdRow>& rows) {
  std::string s = "t,quotient,assembled,abs_err,rel_err,central_quotient,valid\n";
  for (const auto& r : rows)
    s += fmt::format("{:.6g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.t, r.quotient, r.assembled, r.abs_err,
                     r.rel_err, r.central_quotient, r.valid ? 1 : 0);
  return s;
}

/// FD check at the initial shape and mean scenario along V, the deformation
/// field of that scenario scaled to unit maximum norm.
inline GradientCheck check_gradient(const RunConfig& cfg, const std::filesystem::path& csv, std::ostream& out) {
  const auto reference = load_reference(cfg);
  const Mesh mesh = initial_mesh(cfg);
  const Scenario scenario = mean_scenario(cfg.optimizer.scenarios);
  const auto ctx = DiagnosticContext::from(cfg.optimizer, *reference);
  VectorField v = ctx.deformation(mesh, scenario);
  const double vmax = v.values.lpNorm<Eigen::Infinity>();
  if (vmax > 0.0) v.values /= vmax;
  auto g = summarize(fd_check(mesh, scenario, *reference, cfg.optimizer.nu, v, cfg.fd_steps));
  if (!csv.empty()) write_text(csv, fd_csv(g.rows));
  for (const auto& r : g.rows)
    out << fmt::format("t={:<8.1e} quotient={:<14.8g} assembled={:<14.8g} rel_err={:.3e}{}\n", r.t, r.quotient,
                       r.assembled, r.rel_err, r.valid ? "" : "  (mesh invalid)");
  out << fmt::format("min rel_err {:.3e}  slope {:.3f}\n", g.min_rel_err, g.slope);
  return g;
}

// --- lipschitz -------------------------------------------------------------------

/// Checkpoints in a run directory, sorted by iteration.
inline std::vector<ShapeSnapshot> load_checkpoints(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("run directory " + dir.string() + " not found");
  std::vector<ShapeSnapshot> snaps;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (p.extension() != ".json" || p.filename().string().rfind("checkpoint_", 0) != 0) continue;
    std::ifstream in(p);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      const auto mesh_file = dir / j.at("mesh").get<std::string>();
      if (!std::filesystem::exists(mesh_file)) {
        logger().warn("checkpoint {}: missing mesh {}; skipped", p.filename().string(), mesh_file.string());
        continue;
      }
      snaps.push_back({j.at("iteration").get<std::size_t>(), read_msh(mesh_file)});
    } catch (const nlohmann::json::exception& e) {
      logger().warn("checkpoint {}: {}; skipped", p.filename().string(), e.what());
    }
  }
  std::sort(snaps.begin(), snaps.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
  return snaps;
}

/// The checkpoints closest to n_last·k/K for k = 1..K: K shapes spread over
/// the run, the initial shape excluded.
inline std::vector<ShapeSnapshot> moment_snapshots(const std::vector<ShapeSnapshot>& all, std::size_t count) {
  std::vector<ShapeSnapshot> picked;
  if (all.empty() || count == 0) return picked;
  const double last = static_cast<double>(all.back().n);
  std::size_t prev = all.size();
  for (std::size_t k = 1; k <= count; ++k) {
    const double want = last * static_cast<double>(k) / static_cast<double>(count);
    std::size_t best = 0;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (std::abs(static_cast<double>(all[i].n) - want) < std::abs(static_cast<double>(all[best].n) - want)) best = i;
    if (best == prev || all[best].n == 0) continue;
    picked.push_back(all[best]);
    prev = best;
  }
  return picked;
}

struct LipschitzOutput {
  std::vector<LipschitzStudyRow> lipschitz;
  std::vector<SecondMomentRow> moments;
};

/// Lipschitz quotients over the checkpoints whose iteration is a multiple of
/// the configured stride, and the second-moment study at evenly spaced
/// checkpoints. Writes lipschitz.csv, distance.csv, second_moment.csv and
/// lipschitz.svg into `dir`.
inline LipschitzOutput lipschitz(const RunConfig& cfg, const std::filesystem::path& dir, std::ostream& out) {
  const auto reference = load_reference(cfg);
  const auto all = load_checkpoints(dir);
  if (all.size() < 2) throw ConfigError("lipschitz: need at least two checkpoints in " + dir.string());
  std::vector<ShapeSnapshot> picked;
  for (const auto& s : all)
    if (s.n % cfg.lipschitz_stride == 0) picked.push_back(s);
  if (picked.empty() || picked.front().n != all.front().n) picked.insert(picked.begin(), all.front());
  const auto ctx = DiagnosticContext::from(cfg.optimizer, *reference);

  LipschitzOutput result;
  result.lipschitz = lipschitz_study(picked, cfg.samples, cfg.optimizer.seed, ctx);

  result.moments = second_moment_study(moment_snapshots(all, cfg.moment_checkpoints), cfg.samples,
                                       cfg.optimizer.seed, ctx);

  std::string lcsv = "n,d_approx,L_n,mean_sqrt_dJ_n,mean_sqrt_dJ_1\n", dcsv = "n,d_approx\n";
  PlotSeries series{"L_n", {}, {}};
  for (const auto& r : result.lipschitz) {
    lcsv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.n, r.d_approx, r.L, r.mean_sqrt_dJ_n, r.mean_sqrt_dJ_1);
    dcsv += fmt::format("{},{:.17g}\n", r.n, r.d_approx);
    series.x.push_back(static_cast<double>(r.n));
    series.y.push_back(r.L);
  }
  std::string mcsv = "n,mean_gnorm_sq,std_error\n";
  for (const auto& r : result.moments) mcsv += fmt::format("{},{:.17g},{:.17g}\n", r.n, r.mean, r.std_error);
  write_text(dir / "lipschitz.csv", lcsv);
  write_text(dir / "distance.csv", dcsv);
  write_text(dir / "second_moment.csv", mcsv);
  write_svg_plot(dir / "lipschitz.svg", {series}, {"Lipschitz quotient", "iteration n", "L_n", false, false});

  std::vector<double> ls;
  for (const auto& r : result.lipschitz) ls.push_back(r.L);
  if (!ls.empty())
    out << fmt::format("{} quotients: median {:.4g}, max {:.4g}\n", ls.size(), median(ls),
                       *std::max_element(ls.begin(), ls.end()));
  for (const auto& r : result.moments)
    out << fmt::format("n={:<5} E[a(V,V)] ~ {:.4g} +- {:.2g}\n", r.n, r.mean, r.std_error);
  return result;
}

}  // namespace shapeflow::commands
