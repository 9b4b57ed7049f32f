// Acceptance checks: one PASS/FAIL line per criterion. Usage:
//   acceptance [work_dir] [criterion ...]
// Runs every criterion when none is named. Exit status is 1 if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <spdlog/fmt/fmt.h>

#include <shapeflow/commands.hpp>
#include <shapeflow/quadrature.hpp>

using namespace shapeflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ‖u − u_h‖_{H¹} with a degree-5 rule per triangle.
double h1_error(const Mesh& mesh, const ScalarField& uh, const std::function<double(const Vec2&)>& u,
                const std::function<Vec2(const Vec2&)>& grad_u) {
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto g = element_geometry(mesh, t);
    const Vec2 gh = element_gradient(mesh, g, t, uh);
    for (const auto& qp : quadrature::order5()) {
      Vec2 x = Vec2::Zero();
      double vh = 0.0;
      for (int k = 0; k < 3; ++k) {
        x += qp.bary[k] * mesh.node(tri[k]);
        vh += qp.bary[k] * uh[tri[k]];
      }
      const double e = u(x) - vh;
      s += qp.weight * g.area * (e * e + (grad_u(x) - gh).squaredNorm());
    }
  }
  return std::sqrt(s);
}

// -- 1 ------------------------------------------------------------------------

Outcome fem_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const double pi = std::numbers::pi;
  auto u = [&](const Vec2& x) { return std::cos(pi * x.x()) * std::cos(pi * x.y()); };
  auto grad = [&](const Vec2& x) {
    return Vec2(-pi * std::sin(pi * x.x()) * std::cos(pi * x.y()), -pi * std::cos(pi * x.x()) * std::sin(pi * x.y()));
  };
  Scenario s;
  s.kappa = {{"out", 1.0}};
  s.g = BoundaryData::uniform(0.0);
  s.source = [&](const Vec2& x) { return 2 * pi * pi * u(x); };
  Mesh m = generate_fitted_mesh(RectangleDomain{0, 1, 0, 1}, {}, 0.1);
  std::vector<double> err;
  for (int level = 0; level < 3; ++level) {
    err.push_back(h1_error(m, solve_state(m, s), u, grad));
    if (level < 2) m = refine_uniform(m);
  }
  const double r1 = err[0] / err[1], r2 = err[1] / err[2];
  const double secs = seconds_since(t0);
  const bool ok = r1 >= 1.8 && r1 <= 2.2 && r2 >= 1.8 && r2 <= 2.2 && secs < 30;
  return {ok, fmt::format("H1 errors {:.4e} {:.4e} {:.4e}, ratios {:.3f} {:.3f} (want [1.8, 2.2]), {:.1f} s", err[0],
                          err[1], err[2], r1, r2, secs)};
}

// -- 2 ------------------------------------------------------------------------

Outcome interface_solver() {
  const auto t0 = std::chrono::steady_clock::now();
  const Mesh coarse =
      generate_fitted_mesh(EllipseDomain{1.0, 1.0, {0, 0}}, {LoopSpec{CircleLoop{{0, 0}, 0.5, 0}, "in"}}, 0.1);
  Scenario s;
  s.kappa = {{"in", 10.0}, {"out", 1.0}};
  s.g.function = [](const Vec2& x) { return std::cos(std::atan2(x.y(), x.x())); };
  const Mesh half = refine_uniform(coarse);
  const Mesh fine = refine_uniform(half);
  const ScalarField yc = solve_state(coarse, s), yh = solve_state(half, s), yf = solve_state(fine, s);
  auto rel = [](const Mesh& on, const ScalarField& a, const ScalarField& b) {
    ScalarField d(a.size());
    d.values = a.values - b.values;
    return l2_norm(on, d) / l2_norm(on, b);
  };
  const double err = rel(fine, evaluate_on_mesh(coarse, yc, fine), yf);
  const double self = rel(half, evaluate_on_mesh(coarse, yc, half), yh);
  const double secs = seconds_since(t0);
  const bool ok = err <= 4.0 * self && secs < 60;
  return {ok, fmt::format("coarse vs 4x-refined {:.4e}, self-refinement {:.4e} (ratio {:.2f}, want <= 4), {:.1f} s", err,
                          self, err / self, secs)};
}

// -- shared experiment setup --------------------------------------------------------

struct Experiment {
  RunConfig cfg;
  fs::path dir;
};

Experiment prepare(const fs::path& work, const std::string& name) {
  Experiment e;
  e.cfg = load_config(fs::path(SHAPEFLOW_SOURCE_DIR) / "configs" / (name + ".ini"));
  e.dir = work / name;
  fs::create_directories(e.dir);
  e.cfg.reference = e.dir / "reference.json";
  e.cfg.optimizer.output_dir = e.dir / "run";
  if (!fs::exists(e.cfg.reference)) {
    std::ostringstream sink;
    commands::gen_target(e.cfg, sink);
  }
  return e;
}

// -- 3 ------------------------------------------------------------------------

Outcome shape_derivative(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  auto e = prepare(work, "single_shape");
  e.cfg.fd_steps = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5};
  std::ostringstream sink;
  const auto g = commands::check_gradient(e.cfg, e.dir / "fd_check.csv", sink);
  const double secs = seconds_since(t0);
  const bool ok = g.min_rel_err <= 1e-2 && g.slope >= 0.8 && g.slope <= 1.2 && secs < 120;
  return {ok, fmt::format("min rel_err {:.3e} (want <= 1e-2), slope {:.3f} over {} pre-plateau steps (want [0.8, 1.2]), "
                          "{:.1f} s",
                          g.min_rel_err, g.slope, commands::pre_plateau(g.rows).size(), secs)};
}

// -- 4 ------------------------------------------------------------------------

Outcome perimeter_derivative() {
  GeneratorOptions opt;
  opt.outer_region = "trunk";
  const Mesh m = generate_fitted_mesh(RectangleDomain{-1, 0, -0.5, 0.5},
                                      {LoopSpec{CircleLoop{{-0.5, 0.0}, 0.2, 128}, "lungs"}}, 0.02, opt);
  VectorField n(m.node_count());
  for (int i : m.loops()[0].nodes) n.set(i, (m.node(i) - Vec2(-0.5, 0.0)).normalized());
  const double nu = 1e-6;
  const double value = assemble_perimeter_derivative(m, nu).apply(n) / nu;
  const double rel = std::abs(value - 2 * std::numbers::pi) / (2 * std::numbers::pi);
  return {rel <= 0.01 && m.loops()[0].nodes.size() == 128,
          fmt::format("{} segments, dJreg/nu = {:.6f} vs 2pi, rel diff {:.2e} (want <= 1e-2)", m.loops()[0].nodes.size(),
                      value, rel)};
}

// -- 5, 6 ---------------------------------------------------------------------

struct Trend {
  double j_first = 0, j_last = 0, v_first = 0, v_last = 0;
  std::size_t window = 0;
};

Trend trend(const std::vector<LogRow>& log) {
  Trend t;
  t.window = std::max<std::size_t>(1, log.size() / 10);
  std::vector<double> jf, jl, vf, vl;
  for (std::size_t i = 0; i < t.window; ++i) {
    jf.push_back(log[i].J);
    vf.push_back(log[i].V_h1);
    jl.push_back(log[log.size() - 1 - i].J);
    vl.push_back(log[log.size() - 1 - i].V_h1);
  }
  t.j_first = median(jf), t.j_last = median(jl), t.v_first = median(vf), t.v_last = median(vl);
  return t;
}

Outcome experiment_trend(const Experiment& e, const RunReport& report, double limit_seconds, std::string extra,
                         bool extra_ok) {
  if (report.log.size() != e.cfg.optimizer.iterations)
    return {false, fmt::format("stopped after {} of {} iterations ({})", report.log.size(), e.cfg.optimizer.iterations,
                               to_string(report.reason))};
  const Trend t = trend(report.log);
  int retries = 0;
  for (const auto& r : report.log) retries += r.retries;
  const bool ok = t.j_last < 0.5 * t.j_first && t.v_last < t.v_first && report.reason != Termination::mesh_failure &&
                  report.wall_seconds <= limit_seconds && extra_ok;
  return {ok, fmt::format("N={} nodes, median J first/last {}: {:.4g} -> {:.4g} (ratio {:.3f}, want < 0.5), median "
                          "|V|_H1 {:.4g} -> {:.4g}, mesh failures 0, halvings {}, {:.1f} s{}",
                          report.final_mesh.node_count(), t.window, t.j_first, t.j_last, t.j_last / t.j_first,
                          t.v_first, t.v_last, retries, report.wall_seconds, extra)};
}

// -- 9 ------------------------------------------------------------------------

Outcome sampler() {
  using boost::math::quadrature::gauss_kronrod;
  const std::vector<std::pair<std::string, TruncatedNormalSpec>> dists{
      {"trunk", {1.0, 1e-3, 0.7, 1.3}}, {"lungs", {0.005, 1e-3, 2.5e-3, 7.5e-3}}, {"heart", {0.015, 1e-3, 0.01, 0.02}}};
  bool ok = true;
  std::string detail;
  std::uint64_t block = 0;
  for (const auto& [name, s] : dists) {
    // oracle moments of the density restricted to [a, b] ∩ [ρ ± 12σ]
    const double lo = std::max(s.a, s.rho - 12 * s.sigma), hi = std::min(s.b, s.rho + 12 * s.sigma);
    auto pdf = [&](double x) { return std::exp(-0.5 * std::pow((x - s.rho) / s.sigma, 2)); };
    auto integrate = [&](auto f) { return gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13); };
    const double z = integrate(pdf);
    const double mean = integrate([&](double x) { return x * pdf(x); }) / z;
    const double var = integrate([&](double x) { return std::pow(x - mean, 2) * pdf(x); }) / z;
    const double mu4 = integrate([&](double x) { return std::pow(x - mean, 4) * pdf(x); }) / z;
    const int n = 100000;
    RngState rng = RngState::make(20240101, 0, block++);
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_truncated_normal(s, rng);
      sum += x;
      sum2 += x * x;
    }
    const double m = sum / n, sd = std::sqrt((sum2 - n * m * m) / (n - 1));
    const double se_mean = std::sqrt(var / n);
    const double se_sd = std::sqrt((mu4 - var * var) / (4 * var * n));
    const double zm = (m - mean) / se_mean, zs = (sd - std::sqrt(var)) / se_sd;
    ok = ok && std::abs(zm) <= 4 && std::abs(zs) <= 4;
    detail += fmt::format("{}{}: mean z={:+.2f}, sd z={:+.2f}", detail.empty() ? "" : "; ", name, zm, zs);
  }
  return {ok, detail + " (want |z| <= 4, 1e5 draws)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
  std::set<int> wanted;
  for (int i = 2; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  auto want = [&](int k) { return wanted.empty() || wanted.count(k) > 0; };
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int k, const std::string& title, const Outcome& o) {
    std::cout << fmt::format("criterion {:>2} {}: {} | {}", k, o.pass ? "PASS" : "FAIL", title, o.detail) << std::endl;
    if (!o.pass) ++failures;
  };
  auto guarded = [&](int k, const std::string& title, const std::function<Outcome()>& f) {
    if (!want(k)) return;
    try {
      report(k, title, f());
    } catch (const std::exception& e) {
      report(k, title, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "FEM order of convergence", fem_convergence);
  guarded(2, "interface solver vs refined reference", interface_solver);
  guarded(3, "shape derivative vs difference quotients", [&] { return shape_derivative(work); });
  guarded(4, "perimeter derivative", perimeter_derivative);

  // 5, 7, 8 and 10 share the single-shape run
  std::optional<Experiment> single;
  std::optional<RunReport> single_run;
  auto single_shape = [&]() -> const RunReport& {
    if (!single_run) {
      single = prepare(work, "single_shape");
      fs::remove_all(single->cfg.optimizer.output_dir);
      std::ostringstream sink;
      single_run = commands::optimize(single->cfg, sink);
    }
    return *single_run;
  };
  guarded(5, "single-shape experiment", [&] {
    const auto& r = single_shape();
    return experiment_trend(*single, r, 20 * 60, "", true);
  });

  guarded(6, "multi-shape experiment", [&] {
    auto e = prepare(work, "multi_shape");
    fs::remove_all(e.cfg.optimizer.output_dir);
    std::ostringstream sink;
    const auto report = commands::optimize(e.cfg, sink);
    // replay the run step by step and check every accepted shape
    const auto reference = commands::load_reference(e.cfg);
    OptimizerState state{0, initial_mesh(e.cfg), RngState::make(e.cfg.optimizer.seed, streams::optimizer, 1), {}};
    std::size_t non_simple = 0;
    while (state.n < report.log.size()) {
      auto out = sgd_step(state, e.cfg.optimizer, *reference);
      if (out.stop) break;
      state = std::move(out.state);
      for (std::size_t k = 0; k < state.mesh.loops().size(); ++k)
        if (!polygon_is_simple(state.mesh.loop_points(k))) ++non_simple;
    }
    const bool replay_matches = log_csv(state.log) == log_csv(report.log);
    const bool ok = non_simple == 0 && replay_matches && state.mesh.loops().size() == 3;
    return experiment_trend(e, report, 10 * 60,
                            fmt::format(", {} loops, non-simple loop shapes {} over {} iterates, replay {}",
                                        state.mesh.loops().size(), non_simple, state.n,
                                        replay_matches ? "identical" : "DIFFERS"),
                            ok);
  });

  std::optional<commands::LipschitzOutput> lip;
  auto lipschitz = [&]() -> const commands::LipschitzOutput& {
    if (!lip) {
      single_shape();
      std::ostringstream sink;
      lip = commands::lipschitz(single->cfg, single->cfg.optimizer.output_dir, sink);
    }
    return *lip;
  };
  guarded(7, "Lipschitz study", [&] {
    const auto& rows = lipschitz().lipschitz;
    std::vector<double> ls;
    bool finite = !rows.empty();
    for (const auto& r : rows) {
      finite = finite && std::isfinite(r.L) && r.L > 0;
      ls.push_back(r.L);
    }
    if (ls.empty()) return Outcome{false, "no quotients"};
    const double med = median(ls), mx = *std::max_element(ls.begin(), ls.end());
    return Outcome{finite && mx / med <= 20,
                   fmt::format("{} quotients (m={}), all finite: {}, median {:.4g}, max {:.4g}, max/median {:.3f} (want "
                               "<= 20)",
                               ls.size(), single->cfg.samples, finite ? "yes" : "no", med, mx, mx / med)};
  });
  guarded(8, "second-moment diagnostic", [&] {
    const auto& rows = lipschitz().moments;
    if (rows.size() != 5) return Outcome{false, fmt::format("{} checkpoints, want 5", rows.size())};
    double lo = INFINITY, hi = 0;
    bool increasing = true;
    std::string values;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      lo = std::min(lo, rows[i].mean);
      hi = std::max(hi, rows[i].mean);
      if (i > 0 && !(rows[i].mean > rows[i - 1].mean)) increasing = false;
      values += fmt::format("{}n={}: {:.4g}", i ? ", " : "", rows[i].n, rows[i].mean);
    }
    return Outcome{hi / lo < 10 && !increasing,
                   fmt::format("{} (max/min {:.2f}, want < 10; monotone growth: {})", values, hi / lo,
                               increasing ? "yes" : "no")};
  });

  guarded(9, "truncated-normal sampler", sampler);

  guarded(10, "determinism", [&] {
    single_shape();
    Experiment again = *single;
    again.cfg.optimizer.output_dir = single->dir / "run_repeat";
    fs::remove_all(again.cfg.optimizer.output_dir);
    std::ostringstream sink;
    commands::optimize(again.cfg, sink);
    const auto a = slurp(single->cfg.optimizer.output_dir / "log.csv");
    const auto b = slurp(again.cfg.optimizer.output_dir / "log.csv");
    return Outcome{!a.empty() && a == b,
                   fmt::format("log.csv {} bytes vs {} bytes: {}", a.size(), b.size(), a == b ? "identical" : "differ")};
  });

  std::cout << (failures ? fmt::format("{} criteria FAILED", failures) : std::string("all criteria PASSED"))
            << std::endl;
  return failures ? 1 : 0;
}
