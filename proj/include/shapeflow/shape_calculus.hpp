#pragma once

#include <cmath>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "error.hpp"
#include "fem.hpp"
#include "fields.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

namespace shapeflow {

/// Coefficients of the linear functional W ↦ dJ[W] against the vector P1
/// basis (interleaved x/y per node, like VectorField).
struct ShapeDerivative {
  Eigen::VectorXd rhs;
  /// Node mask of the test space; empty means every interior node is active.
  std::vector<char> active;

  double apply(const VectorField& w) const {
    if (w.values.size() != rhs.size()) throw Error("shape derivative: field size mismatch");
    return rhs.dot(w.values);
  }

  ShapeDerivative& operator+=(const ShapeDerivative& o) {
    rhs += o.rhs;
    return *this;
  }
};

struct ObjectiveValue {
  double total = 0.0;
  double tracking = 0.0;
  double perimeter = 0.0;
};

/// Measured data ȳ on its own (fixed) mesh, sampled onto moving meshes.
class ReferenceField {
 public:
  ReferenceField(Mesh mesh, ScalarField ybar)
      : mesh_(std::move(mesh)), ybar_(std::move(ybar)), sampler_(mesh_, ybar_) {}
  ReferenceField(const ReferenceField&) = delete;
  ReferenceField& operator=(const ReferenceField&) = delete;

  const Mesh& mesh() const { return mesh_; }
  const ScalarField& values() const { return ybar_; }
  const FieldSampler& sampler() const { return sampler_; }

  /// Nodal interpolant of ȳ on `target`.
  ScalarField on(const Mesh& target) const { return evaluate_on_mesh(sampler_, target); }

  /// ∇ȳ of the source interpolant at every target node: the rate at which the
  /// nodal interpolant ȳ(x_k) changes when node k moves.
  std::vector<Vec2> gradient_on(const Mesh& target) const {
    std::vector<Vec2> g(target.node_count());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = sampler_.gradient(target.node(i));
    return g;
  }

 private:
  Mesh mesh_;
  ScalarField ybar_;
  FieldSampler sampler_;
};

/// ½∫(y − ȳ)² with the edge-midpoint rule (exact for P1 data).
inline double tracking_objective(const Mesh& mesh, const ScalarField& y, const ScalarField& ybar) {
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const double d[3] = {y[tri[0]] - ybar[tri[0]], y[tri[1]] - ybar[tri[1]], y[tri[2]] - ybar[tri[2]]};
    double q = 0.0;
    for (const auto& qp : quadrature::order2) {
      const double v = qp.bary[0] * d[0] + qp.bary[1] * d[1] + qp.bary[2] * d[2];
      q += qp.weight * v * v;
    }
    s += mesh.signed_area(t) * q;
  }
  return 0.5 * s;
}

inline ObjectiveValue objective_value(const Mesh& mesh, const ScalarField& y, const ScalarField& ybar, double nu) {
  if (nu < 0.0) throw ConfigError("perimeter weight nu must be nonnegative");
  ObjectiveValue v;
  v.tracking = tracking_objective(mesh, y, ybar);
  v.perimeter = mesh.interface_length();
  v.total = v.tracking + nu * v.perimeter;
  return v;
}

/// J(u, ξ) = ½∫(y − ȳ)² + ν·perimeter with y solved for the scenario.
inline ObjectiveValue objective_value(const Mesh& mesh, const Scenario& scenario, const ScalarField& ybar, double nu) {
  return objective_value(mesh, solve_state(mesh, scenario), ybar, nu);
}

struct VolumeDerivativeOptions {
  /// Adds λ∫p div W + η∫y div W, the derivative of the zero-mean constraint
  /// weights (λ, η: state and adjoint multipliers). Both vanish when the
  /// boundary flux is compatible and ∫ȳ = 0.
  bool mean_constraint_terms = true;
};

/// Volume form of the shape derivative of the tracking term:
///
///   ½∫ div(W)(y−ȳ)² − ∫(y−ȳ)∇ȳ·W + ∫κ(div(W) I − ∇W − ∇Wᵀ)∇y·∇p
///
/// tested with every vector hat function W = φ_k e_d. Gradients of y, p and
/// W are constant per triangle, so the κ term is exact; the remaining terms
/// use the edge-midpoint rule. `grad_ybar` holds ∇ȳ at the mesh nodes, matching
/// the nodal interpolation of ȳ, so the ∇ȳ term reads −(M(y−ȳ))_k ∇ȳ(x_k).
/// Boundary rows are zero.
inline ShapeDerivative assemble_volume_derivative(const Mesh& mesh, const Scenario& scenario, const ScalarField& y,
                                                  const ScalarField& p, const ScalarField& ybar,
                                                  const std::vector<Vec2>& grad_ybar,
                                                  const VolumeDerivativeOptions& opt = {}) {
  const auto nv = mesh.node_count();
  if (y.size() != nv || p.size() != nv || ybar.size() != nv || grad_ybar.size() != nv)
    throw Error("volume derivative: input size mismatch");
  const auto kappa = kappa_per_triangle(mesh, scenario);

  double state_multiplier = 0.0, adjoint_multiplier = 0.0;
  if (opt.mean_constraint_terms) {
    Eigen::VectorXd load = assemble_boundary_load(mesh, scenario.g);
    if (scenario.source) load += assemble_source_load(mesh, scenario.source);
    const double area = mesh.total_area();
    double misfit = 0.0;  // ∫(y − ȳ)
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangle(t);
      misfit += mesh.signed_area(t) / 3.0 * ((y[tri[0]] - ybar[tri[0]]) + (y[tri[1]] - ybar[tri[1]]) + (y[tri[2]] - ybar[tri[2]]));
    }
    state_multiplier = load.sum() / area;
    adjoint_multiplier = -misfit / area;
  }

  ShapeDerivative d;
  d.rhs = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(nv));
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto g = element_geometry(mesh, t);
    const Vec2 gy = element_gradient(mesh, g, t, y);
    const Vec2 gp = element_gradient(mesh, g, t, p);
    const double e[3] = {y[tri[0]] - ybar[tri[0]], y[tri[1]] - ybar[tri[1]], y[tri[2]] - ybar[tri[2]]};
    double sq = 0.0;               // ∫_T (y−ȳ)²
    Eigen::Vector3d weighted{0, 0, 0};  // ∫_T (y−ȳ) φ_k
    for (const auto& qp : quadrature::order2) {
      const double v = qp.bary[0] * e[0] + qp.bary[1] * e[1] + qp.bary[2] * e[2];
      sq += qp.weight * v * v;
      for (int k = 0; k < 3; ++k) weighted[k] += qp.weight * v * qp.bary[k];
    }
    sq *= g.area;
    weighted *= g.area;
    const double ky = kappa[t] * g.area;
    const double dot_yp = gy.dot(gp);
    const double mean_terms =
        g.area * (state_multiplier * (p[tri[0]] + p[tri[1]] + p[tri[2]]) +
                  adjoint_multiplier * (y[tri[0]] + y[tri[1]] + y[tri[2]])) / 3.0;
    for (int k = 0; k < 3; ++k) {
      if (mesh.is_boundary_node(tri[k])) continue;
      const Vec2 gphi = g.grad.row(k).transpose();
      const double phi_y = gphi.dot(gy), phi_p = gphi.dot(gp);
      for (int c = 0; c < 2; ++c) {
        const double div = gphi[c];
        double val = 0.5 * div * sq - grad_ybar[tri[k]][c] * weighted[k];
        val += ky * (div * dot_yp - gp[c] * phi_y - gy[c] * phi_p);
        val += div * mean_terms;
        d.rhs[2 * tri[k] + c] += val;
      }
    }
  }
  return d;
}

/// ν·dJ^reg[W] in tangential-divergence form: ν Σ_segments (W(b) − W(a))·τ̂,
/// exact for P1 fields on closed polylines.
inline ShapeDerivative assemble_perimeter_derivative(const Mesh& mesh, double nu) {
  if (nu < 0.0) throw ConfigError("perimeter weight nu must be nonnegative");
  ShapeDerivative d;
  d.rhs = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(mesh.node_count()));
  for (const auto& loop : mesh.loops()) {
    const auto n = loop.nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
      const int a = loop.nodes[i], b = loop.nodes[(i + 1) % n];
      const Vec2 tau = (mesh.node(b) - mesh.node(a)).normalized();
      for (int c = 0; c < 2; ++c) {
        d.rhs[2 * b + c] += nu * tau[c];
        d.rhs[2 * a + c] -= nu * tau[c];
      }
    }
  }
  return d;
}

struct Restriction {
  enum class Mode { none, interface_band };
  Mode mode = Mode::interface_band;
  int band = 0;  ///< graph distance (in edges) from the interface

  static Restriction none() { return {Mode::none, 0}; }
  static Restriction interface_band(int k) { return {Mode::interface_band, k}; }
};

/// Nodes within `band` mesh edges of an interface node.
inline std::vector<char> interface_band_mask(const Mesh& mesh, int band) {
  if (band < 0) throw ConfigError("restriction band must be nonnegative");
  std::vector<int> dist(mesh.node_count(), -1);
  std::queue<int> q;
  for (std::size_t i = 0; i < mesh.node_count(); ++i)
    if (mesh.is_interface_node(i)) {
      dist[i] = 0;
      q.push(static_cast<int>(i));
    }
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    if (dist[v] >= band) continue;
    for (int w : mesh.node_neighbors()[v])
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push(w);
      }
  }
  std::vector<char> mask(mesh.node_count());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = dist[i] >= 0 ? 1 : 0;
  return mask;
}

inline ShapeDerivative apply_restriction(const ShapeDerivative& d, const Mesh& mesh, const Restriction& r) {
  if (r.mode == Restriction::Mode::none) return d;
  ShapeDerivative out = d;
  out.active = interface_band_mask(mesh, r.band);
  for (std::size_t i = 0; i < out.active.size(); ++i)
    if (!out.active[i]) out.rhs.segment(2 * static_cast<Eigen::Index>(i), 2).setZero();
  return out;
}

/// Everything computed for one scenario at one shape.
struct GradientEvaluation {
  ScalarField y;
  ScalarField p;
  ScalarField ybar;
  ObjectiveValue objective;
  ShapeDerivative derivative;  ///< volume + perimeter, before restriction
};

inline GradientEvaluation evaluate_shape_derivative(const Mesh& mesh, const Scenario& scenario,
                                                    const ReferenceField& reference, double nu,
                                                    const VolumeDerivativeOptions& opt = {}) {
  GradientEvaluation ev;
  PdeSolver pde(mesh, scenario);
  ev.y = pde.state().field;
  ev.ybar = reference.on(mesh);
  ev.p = pde.adjoint(ev.y, ev.ybar).field;
  ev.objective = objective_value(mesh, ev.y, ev.ybar, nu);
  ev.derivative = assemble_volume_derivative(mesh, scenario, ev.y, ev.p, ev.ybar, reference.gradient_on(mesh), opt);
  ev.derivative += assemble_perimeter_derivative(mesh, nu);
  return ev;
}

/// J(u, ξ) for a scenario, with ȳ sampled onto the mesh.
inline ObjectiveValue objective_value(const Mesh& mesh, const Scenario& scenario, const ReferenceField& reference,
                                      double nu) {
  return objective_value(mesh, solve_state(mesh, scenario), reference.on(mesh), nu);
}

struct FdRow {
  double t = 0.0;
  double quotient = 0.0;          ///< (J(F_t) − J)/t
  double central_quotient = 0.0;  ///< (J(F_t) − J(F_−t))/2t
  double assembled = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  bool valid = true;
};

/// Compares the assembled derivative dJ[V] with difference quotients of J
/// along the perturbation of identity x + tV.
inline std::vector<FdRow> fd_check(const Mesh& mesh, const Scenario& scenario, const ReferenceField& reference,
                                   double nu, const VectorField& v, const std::vector<double>& t_values,
                                   const VolumeDerivativeOptions& opt = {}) {
  for (std::size_t i = 0; i < mesh.node_count(); ++i)
    if (mesh.is_boundary_node(i) && v.at(i).squaredNorm() != 0.0)
      throw Error("fd_check: direction must vanish on the boundary");
  const auto ev = evaluate_shape_derivative(mesh, scenario, reference, nu, opt);
  const double assembled = ev.derivative.apply(v);
  const double j0 = ev.objective.total;
  std::vector<FdRow> rows;
  for (double t : t_values) {
    FdRow r;
    r.t = t;
    r.assembled = assembled;
    const Mesh plus = apply_displacement(mesh, v, t);
    const Mesh minus = apply_displacement(mesh, v, -t);
    if (!mesh_quality(plus).valid() || !mesh_quality(minus).valid()) {
      r.valid = false;
      rows.push_back(r);
      continue;
    }
    const double jp = objective_value(plus, scenario, reference, nu).total;
    const double jm = objective_value(minus, scenario, reference, nu).total;
    r.quotient = (jp - j0) / t;
    r.central_quotient = (jp - jm) / (2.0 * t);
    r.abs_err = std::abs(r.quotient - assembled);
    r.rel_err = r.abs_err / std::max(std::abs(assembled), 1e-300);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace shapeflow
