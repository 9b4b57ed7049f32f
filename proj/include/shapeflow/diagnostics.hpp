#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "elasticity.hpp"
#include "error.hpp"
#include "log.hpp"
#include "mesh.hpp"
#include "optimizer.hpp"
#include "shape_calculus.hpp"
#include "stochastic.hpp"

namespace shapeflow {

/// d^approx(a, b) = ∫_a max_{y ∈ b} ‖x − y‖ ds, one midpoint sample per
/// segment of a and the maximum taken over the vertices of b.
inline double approx_distance(const std::vector<std::vector<Vec2>>& a, const std::vector<std::vector<Vec2>>& b) {
  if (a.empty() || b.empty()) throw Error("approx_distance: empty loop set");
  double d = 0.0;
  for (const auto& loop : a)
    for (std::size_t i = 0, n = loop.size(); i < n; ++i) {
      const Vec2& p = loop[i];
      const Vec2& q = loop[(i + 1) % n];
      const Vec2 mid = 0.5 * (p + q);
      double far = 0.0;
      for (const auto& other : b)
        for (const auto& v : other) far = std::max(far, (mid - v).norm());
      d += (q - p).norm() * far;
    }
  return d;
}

inline std::vector<std::vector<Vec2>> loop_sets(const Mesh& mesh) {
  std::vector<std::vector<Vec2>> out;
  for (std::size_t k = 0; k < mesh.loops().size(); ++k) out.push_back(mesh.loop_points(k));
  return out;
}

inline double approx_distance(const Mesh& a, const Mesh& b) { return approx_distance(loop_sets(a), loop_sets(b)); }

/// Everything a diagnostic needs to evaluate J and dJ for fresh scenarios.
struct DiagnosticContext {
  const ReferenceField& reference;
  ScenarioSpec scenarios;
  double nu = 0.0;
  Restriction restriction = Restriction::interface_band(0);
  double mu_min = 1.0;
  double mu_max = 1.0;

  static DiagnosticContext from(const OptimizerConfig& cfg, const ReferenceField& reference) {
    return {reference, cfg.scenarios, cfg.nu, cfg.restriction, cfg.mu_min, cfg.mu_max};
  }

  ShapeDerivative derivative(const Mesh& mesh, const Scenario& s) const {
    return apply_restriction(evaluate_shape_derivative(mesh, s, reference, nu).derivative, mesh, restriction);
  }

  VectorField deformation(const Mesh& mesh, const Scenario& s) const {
    return solve_deformation(mesh, compute_mu(mesh, mu_min, mu_max, false), derivative(mesh, s));
  }
};

struct SampleMean {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  std::size_t clamped = 0;  ///< samples with dJ[V] < 0
};

/// (1/m) Σ_j √(dJ(u, ξ^j)[V]) over m scenarios drawn from consecutive blocks
/// starting at rng.block. Negative dJ[V] is clamped to zero.
inline SampleMean mean_sqrt_dJ(const Mesh& mesh, const VectorField& v, std::size_t m, RngState rng,
                               const DiagnosticContext& ctx) {
  if (m == 0) throw ConfigError("mean_sqrt_dJ: sample count must be positive");
  SampleMean r;
  r.samples = m;
  if (v.values.lpNorm<Eigen::Infinity>() == 0.0) return r;
  double sum = 0.0, sum_sq = 0.0;
  const std::uint64_t first = rng.block;
  for (std::size_t j = 0; j < m; ++j) {
    RngState draw = rng;
    draw.block = first + j;
    draw.position = 0;
    const double value = ctx.derivative(mesh, draw_scenario(ctx.scenarios, draw)).apply(v);
    double s = 0.0;
    if (value < 0.0) ++r.clamped;
    else s = std::sqrt(value);
    sum += s;
    sum_sq += s * s;
  }
  if (r.clamped) logger().info("mean_sqrt_dJ: clamped {} of {} negative samples", r.clamped, m);
  if (r.clamped == m) logger().warn("mean_sqrt_dJ: every sample was negative");
  const double md = static_cast<double>(m);
  r.mean = sum / md;
  if (m > 1) r.std_error = std::sqrt(std::max(0.0, (sum_sq - md * r.mean * r.mean) / (md - 1.0)) / md);
  return r;
}

/// One shape along a run, identified by its iteration number.
struct ShapeSnapshot {
  std::size_t n = 0;
  Mesh mesh;
};

struct LipschitzStudyRow {
  std::size_t n = 0;
  double d_approx = 0.0;
  double mean_sqrt_dJ_n = 0.0;
  double mean_sqrt_dJ_1 = 0.0;
  double L = 0.0;
};

/// Blocks reserved per snapshot, so each snapshot's samples are fresh.
inline constexpr std::uint64_t diagnostic_block_stride = std::uint64_t{1} << 32;

/// L_n = [(1/m) Σ_j (√dJ(u_n, ξ^j)[V_n] + √dJ(u_1, ξ^j)[V_1])] / d^approx(u_n, u_1)
/// for every snapshot after the first, which plays the role of u_1. V_n is
/// solved once per snapshot for a fresh scenario and held fixed over the samples.
inline std::vector<LipschitzStudyRow> lipschitz_study(const std::vector<ShapeSnapshot>& snapshots, std::size_t m,
                                                      std::uint64_t seed, const DiagnosticContext& ctx) {
  if (snapshots.size() < 2) throw Error("lipschitz_study: need at least two snapshots");
  auto blocks = [&](std::size_t n) { return static_cast<std::uint64_t>(n) * diagnostic_block_stride; };
  auto deformation_at = [&](const ShapeSnapshot& s) {
    RngState rng = RngState::make(seed, streams::lipschitz_reference, blocks(s.n));
    return ctx.deformation(s.mesh, draw_scenario(ctx.scenarios, rng));
  };
  const auto& first = snapshots.front();
  const double ms1 =
      mean_sqrt_dJ(first.mesh, deformation_at(first), m, RngState::make(seed, streams::diagnostics, blocks(first.n)), ctx)
          .mean;
  std::vector<LipschitzStudyRow> rows;
  for (std::size_t k = 1; k < snapshots.size(); ++k) {
    const auto& s = snapshots[k];
    LipschitzStudyRow row;
    row.n = s.n;
    row.d_approx = approx_distance(s.mesh, first.mesh);
    const double moved = (s.mesh.nodes().size() == first.mesh.nodes().size())
                             ? [&] {
                                 double mx = 0.0;
                                 for (std::size_t i = 0; i < s.mesh.node_count(); ++i)
                                   mx = std::max(mx, (s.mesh.node(i) - first.mesh.node(i)).norm());
                                 return mx;
                               }()
                             : 1.0;
    if (moved == 0.0 || !(row.d_approx > 0.0)) {
      logger().warn("lipschitz_study: n={} coincides with the first shape; skipped", s.n);
      continue;
    }
    row.mean_sqrt_dJ_1 = ms1;
    row.mean_sqrt_dJ_n =
        mean_sqrt_dJ(s.mesh, deformation_at(s), m, RngState::make(seed, streams::diagnostics, blocks(s.n)), ctx).mean;
    row.L = (row.mean_sqrt_dJ_n + row.mean_sqrt_dJ_1) / row.d_approx;
    rows.push_back(row);
  }
  return rows;
}

struct SecondMomentRow {
  std::size_t n = 0;
  double mean = 0.0;       ///< (1/m) Σ a(V(u_n, ξ^j), V(u_n, ξ^j))
  double std_error = 0.0;
};

/// Sample estimate of E[‖v(u_n, ξ)‖²] = E[a(V, V)] at each snapshot.
inline std::vector<SecondMomentRow> second_moment_study(const std::vector<ShapeSnapshot>& snapshots, std::size_t m,
                                                        std::uint64_t seed, const DiagnosticContext& ctx) {
  if (m == 0) throw ConfigError("second_moment_study: sample count must be positive");
  std::vector<SecondMomentRow> rows;
  for (const auto& s : snapshots) {
    const MuField mu = compute_mu(s.mesh, ctx.mu_min, ctx.mu_max, false);
    const DeformationSolver solver(s.mesh, mu);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      RngState rng = RngState::make(seed, streams::diagnostics, s.n * diagnostic_block_stride + j);
      const VectorField v = solver.solve(ctx.derivative(s.mesh, draw_scenario(ctx.scenarios, rng)));
      const double e = solver.energy(v);
      sum += e;
      sum_sq += e * e;
    }
    const double md = static_cast<double>(m);
    SecondMomentRow row{s.n, sum / md, 0.0};
    if (m > 1) row.std_error = std::sqrt(std::max(0.0, (sum_sq - md * row.mean * row.mean) / (md - 1.0)) / md);
    rows.push_back(row);
  }
  return rows;
}

/// Least-squares slope of log y against log x over the positive pairs.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("loglog_slope: size mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++k;
  }
  if (k < 2) return std::numeric_limits<double>::quiet_NaN();
  const double kd = static_cast<double>(k);
  return (kd * sxy - sx * sy) / (kd * sxx - sx * sx);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace shapeflow
