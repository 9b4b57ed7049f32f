#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <spdlog/fmt/fmt.h>

#include "elasticity.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "log.hpp"
#include "mesh.hpp"
#include "mesh_io.hpp"
#include "shape_calculus.hpp"
#include "stochastic.hpp"

namespace shapeflow {

/// Step sizes t_n for n = 1, 2, ...
struct StepSchedule {
  enum class Kind { robbins_monro, constant, power };
  Kind kind = Kind::robbins_monro;
  double t0 = 1.0;
  double alpha = 1.0;  ///< exponent of the power schedule t0 / n^alpha

  static StepSchedule robbins_monro(double t0) { return {Kind::robbins_monro, t0, 1.0}; }
  static StepSchedule constant(double t) { return {Kind::constant, t, 0.0}; }
  static StepSchedule power(double t0, double alpha) { return {Kind::power, t0, alpha}; }

  void validate() const {
    if (!(t0 >= 0.0) || !std::isfinite(t0)) throw ConfigError("step size must be finite and nonnegative");
    if (kind == Kind::power && !(alpha > 0.5 && alpha <= 1.0)) throw ConfigError("power schedule needs alpha in (1/2, 1]");
  }

  double operator()(std::size_t n) const {
    if (n == 0) throw Error("step schedule is indexed from n = 1");
    switch (kind) {
      case Kind::robbins_monro: return t0 / static_cast<double>(n);
      case Kind::constant: return t0;
      case Kind::power: return t0 / std::pow(static_cast<double>(n), alpha);
    }
    return 0.0;
  }
};

struct OptimizerConfig {
  ScenarioSpec scenarios;
  double nu = 0.0;
  StepSchedule schedule;
  double mu_min = 1.0;
  double mu_max = 1.0;
  /// Clamp (rather than reject) μ fields that leave [μ_min, μ_max] on
  /// deformed meshes with obtuse triangles.
  bool mu_strict = false;
  Restriction restriction = Restriction::interface_band(0);
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  int max_retries = 10;
  double step_floor = 1e-12;
  std::size_t batch_size = 1;
  std::size_t checkpoint_stride = 50;
  std::filesystem::path output_dir;  ///< empty: no files written

  void validate() const {
    schedule.validate();
    if (nu < 0.0) throw ConfigError("nu must be nonnegative");
    if (!(mu_min > 0.0) || !(mu_min <= mu_max)) throw ConfigError("require 0 < mu_min <= mu_max");
    if (max_retries < 0) throw ConfigError("max_retries must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(step_floor > 0.0)) throw ConfigError("step_floor must be positive");
  }
};

struct LogRow {
  std::size_t n = 0;
  double t_used = 0.0;
  double J = 0.0;
  double Jobj = 0.0;
  double Jreg = 0.0;
  double V_h1 = 0.0;
  double V_gnorm = 0.0;
  double min_angle = 0.0;  ///< radians, of the accepted mesh
  int retries = 0;
  double wall_ms = 0.0;
};

struct OptimizerState {
  std::size_t n = 0;  ///< accepted iterations so far
  Mesh mesh;
  RngState rng;  ///< block = next iteration index
  std::vector<LogRow> log;
};

enum class Termination { max_iters, step_floor, mesh_failure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::max_iters: return "max_iters";
    case Termination::step_floor: return "step_floor";
    case Termination::mesh_failure: return "mesh_failure";
  }
  return "?";
}

struct StepOutcome {
  OptimizerState state;
  std::optional<Termination> stop;  ///< set when no step was accepted
};

struct RunReport {
  Mesh final_mesh;
  std::vector<LogRow> log;
  double wall_seconds = 0.0;
  Termination reason = Termination::max_iters;
};

/// Accepts a candidate mesh: no inverted or needle triangles and every loop
/// still a simple polygon.
inline bool acceptable(const Mesh& mesh, MeshQualityReport* report = nullptr) {
  const auto q = mesh_quality(mesh);
  if (report) *report = q;
  if (!q.valid()) return false;
  for (std::size_t k = 0; k < mesh.loops().size(); ++k)
    if (!polygon_is_simple(mesh.loop_points(k))) return false;
  return true;
}

/// Averaged stochastic shape derivative over `batch` scenarios drawn from the
/// iteration's counter block.
struct BatchGradient {
  ShapeDerivative derivative;  ///< restricted
  ObjectiveValue objective;    ///< batch average
};

inline BatchGradient batch_gradient(const Mesh& mesh, const OptimizerConfig& cfg, const ReferenceField& reference,
                                    RngState rng) {
  BatchGradient out;
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const Scenario scenario = draw_scenario(cfg.scenarios, rng);
    auto ev = evaluate_shape_derivative(mesh, scenario, reference, cfg.nu);
    if (b == 0) out.derivative = std::move(ev.derivative);
    else out.derivative += ev.derivative;
    out.objective.total += ev.objective.total;
    out.objective.tracking += ev.objective.tracking;
    out.objective.perimeter += ev.objective.perimeter;
  }
  const double inv = 1.0 / static_cast<double>(cfg.batch_size);
  out.derivative.rhs *= inv;
  out.objective.total *= inv;
  out.objective.tracking *= inv;
  out.objective.perimeter *= inv;
  out.derivative = apply_restriction(out.derivative, mesh, cfg.restriction);
  return out;
}

/// One iteration of the stochastic gradient method with the retraction
/// u_{n+1} = u_n − t_n V_n, halving t_n while the candidate mesh is broken.
inline StepOutcome sgd_step(const OptimizerState& state, const OptimizerConfig& cfg, const ReferenceField& reference) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = state.n + 1;
  const double t_nominal = cfg.schedule(n);
  if (t_nominal < cfg.step_floor) return {state, Termination::step_floor};

  RngState rng = state.rng;
  rng.block = n;
  rng.position = 0;
  const auto grad = batch_gradient(state.mesh, cfg, reference, rng);
  const MuField mu = compute_mu(state.mesh, cfg.mu_min, cfg.mu_max, cfg.mu_strict);
  const DeformationSolver solver(state.mesh, mu);
  const VectorField v = solver.solve(grad.derivative);
  const double energy = solver.energy(v);
  logger().debug("n={} dJ[-V]={:.6e} -a(V,V)={:.6e}", n, -grad.derivative.apply(v), -energy);

  LogRow row;
  row.n = n;
  row.J = grad.objective.total;
  row.Jobj = grad.objective.tracking;
  row.Jreg = grad.objective.perimeter;
  row.V_h1 = vector_h1_norm(state.mesh, v);
  row.V_gnorm = std::sqrt(std::max(0.0, energy));

  double t = t_nominal;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) t *= 0.5;
    Mesh candidate = apply_displacement(state.mesh, v, -t);
    MeshQualityReport q;
    if (!acceptable(candidate, &q)) {
      logger().info("n={} step {:.3e} breaks the mesh ({} inverted); halving", n, t, q.inverted_count);
      continue;
    }
    OptimizerState next{n, std::move(candidate), state.rng, state.log};
    next.rng.block = n + 1;
    next.rng.position = 0;
    row.t_used = t;
    row.retries = attempt;
    row.min_angle = q.min_angle;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    next.log.push_back(row);
    return {std::move(next), std::nullopt};
  }
  logger().warn("n={} no valid mesh after {} step halvings", n, cfg.max_retries);
  return {state, Termination::mesh_failure};
}

// --- output ----------------------------------------------------------------

inline std::string log_csv(const std::vector<LogRow>& log) {
  std::string s = "n,t_used,J,Jobj,Jreg,V_h1,V_gnorm,min_angle,retries\n";
  for (const auto& r : log)
    s += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.n, r.t_used, r.J, r.Jobj,
                     r.Jreg, r.V_h1, r.V_gnorm, r.min_angle, r.retries);
  return s;
}

inline std::string timing_csv(const std::vector<LogRow>& log) {
  std::string s = "n,wall_ms\n";
  for (const auto& r : log) s += fmt::format("{},{:.3f}\n", r.n, r.wall_ms);
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string checkpoint_stem(std::size_t n) { return fmt::format("checkpoint_{:06d}", n); }

/// Writes <stem>.msh, <stem>.vtk and <stem>.json into `dir`.
inline void write_checkpoint(const std::filesystem::path& dir, const OptimizerState& state, const OptimizerConfig& cfg) {
  const auto stem = dir / checkpoint_stem(state.n);
  write_msh(state.mesh, stem.string() + ".msh");
  const auto mu = compute_mu(state.mesh, cfg.mu_min, cfg.mu_max, false);
  write_vtk(state.mesh, {{"mu", mu.values}}, stem.string() + ".vtk");
  nlohmann::json j;
  j["iteration"] = state.n;
  j["seed"] = state.rng.seed;
  j["stream"] = state.rng.stream;
  j["counter"] = state.rng.block;
  j["mesh"] = checkpoint_stem(state.n) + ".msh";
  write_text(stem.string() + ".json", j.dump(2) + "\n");
}

/// Runs `cfg.iterations` steps of the stochastic gradient method from `initial`.
/// With an output directory, writes log.csv, timing.csv and checkpoints at
/// n = 0, every stride, and at the end.
inline RunReport run(const Mesh& initial, const OptimizerConfig& cfg, const ReferenceField& reference) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  OptimizerState state{0, initial, RngState::make(cfg.seed, streams::optimizer, 1), {}};
  const bool files = !cfg.output_dir.empty();
  if (files) {
    std::filesystem::create_directories(cfg.output_dir);
    write_checkpoint(cfg.output_dir, state, cfg);
  }
  auto flush_logs = [&] {
    if (!files) return;
    write_text(cfg.output_dir / "log.csv", log_csv(state.log));
    write_text(cfg.output_dir / "timing.csv", timing_csv(state.log));
  };

  RunReport report{initial, {}, 0.0, Termination::max_iters};
  try {
    while (state.n < cfg.iterations) {
      auto outcome = sgd_step(state, cfg, reference);
      if (outcome.stop) {
        report.reason = *outcome.stop;
        break;
      }
      state = std::move(outcome.state);
      const auto& r = state.log.back();
      logger().info("n={} t={:.3e} J={:.6e} |V|={:.4e} retries={}", r.n, r.t_used, r.J, r.V_h1, r.retries);
      if (files && cfg.checkpoint_stride > 0 && state.n % cfg.checkpoint_stride == 0)
        write_checkpoint(cfg.output_dir, state, cfg);
    }
  } catch (...) {
    flush_logs();
    throw;
  }
  if (files && (cfg.checkpoint_stride == 0 || state.n % cfg.checkpoint_stride != 0))
    write_checkpoint(cfg.output_dir, state, cfg);
  flush_logs();
  report.final_mesh = state.mesh;
  report.log = std::move(state.log);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace shapeflow
