#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include "error.hpp"
#include "fields.hpp"
#include "log.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

namespace shapeflow {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Neumann boundary data g on the outer boundary.
///
/// Either a constant, piecewise-constant values on equal angular sectors
/// around `center` (sector k covers angles [2πk/m, 2π(k+1)/m) measured from
/// the positive x axis), or an arbitrary function of position.
struct BoundaryData {
  double constant = 0.0;
  std::vector<double> sectors;
  Vec2 center = Vec2::Zero();
  std::function<double(const Vec2&)> function;

  static BoundaryData uniform(double g) { return BoundaryData{g, {}, Vec2::Zero(), {}}; }

  double operator()(const Vec2& x) const {
    if (function) return function(x);
    if (!sectors.empty()) {
      double theta = std::atan2(x.y() - center.y(), x.x() - center.x());
      if (theta < 0) theta += 2.0 * std::numbers::pi;
      auto k = static_cast<std::size_t>(theta / (2.0 * std::numbers::pi) * static_cast<double>(sectors.size()));
      return sectors[std::min(k, sectors.size() - 1)];
    }
    return constant;
  }
};

/// One realization of the random inputs: conductivity per region name and the
/// boundary flux. `source` is an optional volume term used for manufactured
/// solutions; it is empty in the interface identification problem.
struct Scenario {
  std::map<std::string, double> kappa;
  BoundaryData g;
  std::function<double(const Vec2&)> source;
};

/// Per-triangle P1 data: area and the constant gradients of the three hat functions.
struct ElementGeometry {
  double area = 0.0;
  Eigen::Matrix<double, 3, 2> grad;
};

inline ElementGeometry element_geometry(const Mesh& mesh, std::size_t t) {
  const auto& tri = mesh.triangle(t);
  const Vec2& a = mesh.node(tri[0]);
  const Vec2& b = mesh.node(tri[1]);
  const Vec2& c = mesh.node(tri[2]);
  const double det = orient2d(a, b, c);
  ElementGeometry g;
  g.area = 0.5 * det;
  // grad phi_i = rot90(opposite edge) / det
  g.grad.row(0) = Eigen::RowVector2d(b.y() - c.y(), c.x() - b.x()) / det;
  g.grad.row(1) = Eigen::RowVector2d(c.y() - a.y(), a.x() - c.x()) / det;
  g.grad.row(2) = Eigen::RowVector2d(a.y() - b.y(), b.x() - a.x()) / det;
  return g;
}

/// Gradient of a P1 field on triangle t.
inline Vec2 element_gradient(const Mesh& mesh, const ElementGeometry& g, std::size_t t, const ScalarField& f) {
  const auto& tri = mesh.triangle(t);
  return g.grad.transpose() * Eigen::Vector3d(f[tri[0]], f[tri[1]], f[tri[2]]);
}

inline std::vector<double> kappa_per_triangle(const Mesh& mesh, const Scenario& s) {
  std::vector<double> per_region(mesh.region_names().size());
  for (std::size_t r = 0; r < per_region.size(); ++r) {
    const auto it = s.kappa.find(mesh.region_names()[r]);
    if (it == s.kappa.end())
      throw ConfigError("scenario has no conductivity for region '" + mesh.region_names()[r] + "'");
    if (!(it->second > 0.0)) throw ConfigError("conductivity of region '" + it->first + "' must be positive");
    per_region[r] = it->second;
  }
  std::vector<double> k(mesh.triangle_count());
  for (std::size_t t = 0; t < k.size(); ++t) k[t] = per_region[mesh.region(t)];
  return k;
}

/// K_ij = sum_T coeff(T) ∫_T ∇φ_i·∇φ_j.
inline SparseMatrix assemble_stiffness(const Mesh& mesh, const std::vector<double>& coeff) {
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  Triplets trip;
  trip.reserve(9 * mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto g = element_geometry(mesh, t);
    const Eigen::Matrix3d ke = coeff[t] * g.area * g.grad * g.grad.transpose();
    const auto& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], ke(i, j));
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// Consistent P1 mass matrix (edge-midpoint quadrature is exact here).
inline SparseMatrix assemble_mass(const Mesh& mesh) {
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  Triplets trip;
  trip.reserve(9 * mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double a = mesh.signed_area(t);
    const auto& tri = mesh.triangle(t);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(tri[i], tri[j], a * (i == j ? 2.0 : 1.0) / 12.0);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// m_i = ∫_D φ_i dx.
inline Eigen::VectorXd domain_weights(const Mesh& mesh) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.node_count()));
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const double a = mesh.signed_area(t) / 3.0;
    for (int v : mesh.triangle(t)) m[v] += a;
  }
  return m;
}

/// b_i = ∫_{∂D} g φ_i ds, two-point Gauss per boundary edge.
inline Eigen::VectorXd assemble_boundary_load(const Mesh& mesh, const BoundaryData& g) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.node_count()));
  for (const auto& e : mesh.boundary_edges()) {
    const Vec2& p = mesh.node(e[0]);
    const Vec2& q = mesh.node(e[1]);
    const double len = (q - p).norm();
    for (const auto& [s, w] : quadrature::gauss2()) {
      const double gv = g((1.0 - s) * p + s * q) * w * len;
      b[e[0]] += (1.0 - s) * gv;
      b[e[1]] += s * gv;
    }
  }
  return b;
}

/// b_i = ∫_D f φ_i dx with the edge-midpoint rule.
inline Eigen::VectorXd assemble_source_load(const Mesh& mesh, const std::function<double(const Vec2&)>& f) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.node_count()));
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const double a = mesh.signed_area(t);
    for (const auto& qp : quadrature::order2) {
      const Vec2 x = qp.bary[0] * mesh.node(tri[0]) + qp.bary[1] * mesh.node(tri[1]) + qp.bary[2] * mesh.node(tri[2]);
      const double fx = f(x) * qp.weight * a;
      for (int i = 0; i < 3; ++i) b[tri[i]] += qp.bary[i] * fx;
    }
  }
  return b;
}

struct LinearSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
};

inline LinearSystem assemble_state_system(const Mesh& mesh, const Scenario& scenario) {
  LinearSystem sys;
  sys.matrix = assemble_stiffness(mesh, kappa_per_triangle(mesh, scenario));
  sys.rhs = assemble_boundary_load(mesh, scenario.g);
  if (scenario.source) sys.rhs += assemble_source_load(mesh, scenario.source);
  return sys;
}

/// Solver for the pure-Neumann operator restricted to zero-mean functions.
///
/// Solves the saddle-point system [K m; mᵀ 0][y; λ] = [b; 0]. The multiplier
/// λ = Σb / Σm absorbs any incompatibility of the data. Factorizes once and can
/// be reused for several right-hand sides.
class ZeroMeanSolver {
 public:
  static constexpr double tolerance = 1e-10;

  ZeroMeanSolver(const SparseMatrix& k, Eigen::VectorXd weights) : k_(k), m_(std::move(weights)) {
    const auto n = k.rows();
    Triplets trip;
    trip.reserve(static_cast<std::size_t>(k.nonZeros() + 2 * n));
    for (Eigen::Index c = 0; c < k.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(k, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Eigen::Index i = 0; i < n; ++i) {
      trip.emplace_back(i, n, m_[i]);
      trip.emplace_back(n, i, m_[i]);
    }
    augmented_.resize(n + 1, n + 1);
    augmented_.setFromTriplets(trip.begin(), trip.end());
    augmented_.makeCompressed();
    lu_.analyzePattern(augmented_);
    lu_.factorize(augmented_);
    direct_ok_ = lu_.info() == Eigen::Success;
    if (!direct_ok_) logger().warn("sparse LU failed on zero-mean system; falling back to MINRES");
  }

  struct Result {
    ScalarField field;
    double multiplier = 0.0;
  };

  Result solve(const Eigen::VectorXd& b) const {
    const auto n = k_.rows();
    if (b.size() != n) throw Error("zero-mean solve: rhs size mismatch");
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = b;
    rhs[n] = 0.0;
    Eigen::VectorXd x;
    if (b.lpNorm<Eigen::Infinity>() == 0.0) {
      x = Eigen::VectorXd::Zero(n + 1);
    } else {
      if (direct_ok_) x = lu_.solve(rhs);
      if (!direct_ok_ || !(relative_residual(x, rhs) <= tolerance)) {
        Eigen::MINRES<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::IdentityPreconditioner> minres;
        minres.setTolerance(tolerance * 1e-2);
        minres.setMaxIterations(20 * static_cast<Eigen::Index>(n) + 100);
        minres.compute(augmented_);
        x = minres.solve(rhs);
      }
      const double res = relative_residual(x, rhs);
      if (!(res <= tolerance)) throw NumericalError("zero-mean solve did not converge", res);
    }
    Result r;
    r.field = ScalarField(Eigen::VectorXd(x.head(n)));
    r.multiplier = x[n];
    return r;
  }

  const Eigen::VectorXd& weights() const { return m_; }

 private:
  double relative_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) const {
    const double nb = rhs.norm();
    return (augmented_ * x - rhs).norm() / (nb > 0 ? nb : 1.0);
  }

  SparseMatrix k_;
  Eigen::VectorXd m_;
  SparseMatrix augmented_;
  Eigen::SparseLU<SparseMatrix> lu_;
  bool direct_ok_ = false;
};

inline ScalarField solve_zero_mean(const SparseMatrix& k, const Eigen::VectorXd& b, const Eigen::VectorXd& weights) {
  return ZeroMeanSolver(k, weights).solve(b).field;
}

/// ∫ f² over the mesh for a P1 field.
inline double l2_norm(const Mesh& mesh, const ScalarField& f) {
  const SparseMatrix m = assemble_mass(mesh);
  return std::sqrt(std::max(0.0, f.values.dot(m * f.values)));
}

inline double h1_seminorm(const Mesh& mesh, const ScalarField& f) {
  double s = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto g = element_geometry(mesh, t);
    s += g.area * element_gradient(mesh, g, t, f).squaredNorm();
  }
  return std::sqrt(s);
}

inline double h1_norm(const Mesh& mesh, const ScalarField& f) {
  return std::hypot(l2_norm(mesh, f), h1_seminorm(mesh, f));
}

/// State and adjoint solves for one scenario on one mesh, sharing the
/// factorization of the state operator.
class PdeSolver {
 public:
  PdeSolver(const Mesh& mesh, const Scenario& scenario)
      : mesh_(&mesh),
        kappa_(kappa_per_triangle(mesh, scenario)),
        mass_(assemble_mass(mesh)),
        solver_(assemble_stiffness(mesh, kappa_), domain_weights(mesh)) {
    rhs_ = assemble_boundary_load(mesh, scenario.g);
    if (scenario.source) rhs_ += assemble_source_load(mesh, scenario.source);
  }

  /// State y with ∫κ∇y·∇φ = ∫_{∂D} gφ (+∫fφ) for zero-mean φ, and ∫y = 0.
  const ZeroMeanSolver::Result& state() {
    if (!state_) {
      state_ = solver_.solve(rhs_);
      logger().debug("state solve: |y|_H1 = {:.6e}, multiplier = {:.6e}", h1_norm(*mesh_, state_->field),
                     state_->multiplier);
    }
    return *state_;
  }

  /// Adjoint p with ∫κ∇φ·∇p = -∫(y - ȳ)φ for zero-mean φ, and ∫p = 0.
  ZeroMeanSolver::Result adjoint(const ScalarField& y, const ScalarField& ybar) const {
    if (y.size() != mesh_->node_count() || ybar.size() != mesh_->node_count())
      throw Error("adjoint: field size mismatch");
    const Eigen::VectorXd rhs = -(mass_ * (y.values - ybar.values));
    return solver_.solve(rhs);
  }

  const std::vector<double>& kappa() const { return kappa_; }
  const SparseMatrix& mass() const { return mass_; }
  const Eigen::VectorXd& load() const { return rhs_; }
  const Eigen::VectorXd& weights() const { return solver_.weights(); }

 private:
  const Mesh* mesh_;
  std::vector<double> kappa_;
  SparseMatrix mass_;
  ZeroMeanSolver solver_;
  Eigen::VectorXd rhs_;
  std::optional<ZeroMeanSolver::Result> state_;
};

inline ScalarField solve_state(const Mesh& mesh, const Scenario& scenario) {
  PdeSolver s(mesh, scenario);
  return s.state().field;
}

inline ScalarField solve_adjoint(const Mesh& mesh, const Scenario& scenario, const ScalarField& y,
                                 const ScalarField& ybar) {
  PdeSolver s(mesh, scenario);
  return s.adjoint(y, ybar).field;
}

/// Point location on a fixed triangulation through a uniform bucket grid.
class PointLocator {
 public:
  struct Hit {
    std::size_t triangle;
    std::array<double, 3> bary;
  };

  explicit PointLocator(const Mesh& mesh, double tolerance = 1e-10) : mesh_(&mesh), tol_(tolerance) {
    lo_ = hi_ = mesh.node(0);
    for (const auto& p : mesh.nodes()) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    const double span = std::max((hi_ - lo_).maxCoeff(), 1e-300);
    const auto target = std::max<std::size_t>(1, mesh.triangle_count() / 2);
    n_ = std::max<int>(1, static_cast<int>(std::sqrt(static_cast<double>(target))));
    cell_ = span / n_ * (1.0 + 1e-12);
    buckets_.assign(static_cast<std::size_t>(n_ * n_), {});
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangle(t);
      Vec2 a = mesh.node(tri[0]), b = a;
      for (int v : tri) {
        a = a.cwiseMin(mesh.node(v));
        b = b.cwiseMax(mesh.node(v));
      }
      const auto [i0, j0] = cell(a);
      const auto [i1, j1] = cell(b);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) buckets_[static_cast<std::size_t>(j * n_ + i)].push_back(t);
    }
  }

  /// Containing triangle of p, or the nearest one if p is outside the mesh by at
  /// most the tolerance. Throws EvaluationError otherwise.
  Hit locate(const Vec2& p) const {
    const auto [i, j] = cell(p);
    for (std::size_t t : buckets_[static_cast<std::size_t>(j * n_ + i)]) {
      const auto b = barycentric(t, p);
      if (b[0] >= -1e-12 && b[1] >= -1e-12 && b[2] >= -1e-12) return {t, clamp(b)};
    }
    // Outside every candidate: nearest triangle by distance, brute force.
    double best = INFINITY;
    std::size_t best_t = 0;
    for (std::size_t t = 0; t < mesh_->triangle_count(); ++t) {
      const auto b = barycentric(t, p);
      if (b[0] >= -1e-12 && b[1] >= -1e-12 && b[2] >= -1e-12) return {t, clamp(b)};
      const double d = distance_to_triangle(t, p);
      if (d < best) {
        best = d;
        best_t = t;
      }
    }
    if (best > tol_)
      throw EvaluationError("point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                            ") lies outside the source mesh");
    return {best_t, clamp(barycentric(best_t, p))};
  }

 private:
  std::pair<int, int> cell(const Vec2& p) const {
    const int i = std::clamp(static_cast<int>((p.x() - lo_.x()) / cell_), 0, n_ - 1);
    const int j = std::clamp(static_cast<int>((p.y() - lo_.y()) / cell_), 0, n_ - 1);
    return {i, j};
  }

  std::array<double, 3> barycentric(std::size_t t, const Vec2& p) const {
    const auto& tri = mesh_->triangle(t);
    const Vec2& a = mesh_->node(tri[0]);
    const Vec2& b = mesh_->node(tri[1]);
    const Vec2& c = mesh_->node(tri[2]);
    const double det = orient2d(a, b, c);
    const double l0 = orient2d(p, b, c) / det;
    const double l1 = orient2d(a, p, c) / det;
    return {l0, l1, 1.0 - l0 - l1};
  }

  static std::array<double, 3> clamp(std::array<double, 3> b) {
    double s = 0.0;
    for (auto& v : b) {
      v = std::max(v, 0.0);
      s += v;
    }
    for (auto& v : b) v /= s;
    return b;
  }

  double distance_to_triangle(std::size_t t, const Vec2& p) const {
    const auto& tri = mesh_->triangle(t);
    double d = INFINITY;
    for (int e = 0; e < 3; ++e)
      d = std::min(d, point_segment_distance(p, mesh_->node(tri[e]), mesh_->node(tri[(e + 1) % 3])));
    return d;
  }

  const Mesh* mesh_;
  double tol_;
  Vec2 lo_, hi_;
  int n_ = 1;
  double cell_ = 1.0;
  std::vector<std::vector<std::size_t>> buckets_;
};

/// P1 interpolant of a field living on another mesh, sampled at points.
class FieldSampler {
 public:
  FieldSampler(const Mesh& source, const ScalarField& field) : source_(&source), field_(&field), locator_(source) {
    if (field.size() != source.node_count()) throw Error("sampler: field size mismatch");
  }

  double value(const Vec2& p) const {
    const auto hit = locator_.locate(p);
    const auto& tri = source_->triangle(hit.triangle);
    return hit.bary[0] * (*field_)[tri[0]] + hit.bary[1] * (*field_)[tri[1]] + hit.bary[2] * (*field_)[tri[2]];
  }

  /// Piecewise-constant gradient of the source interpolant at p.
  Vec2 gradient(const Vec2& p) const {
    const auto hit = locator_.locate(p);
    const auto g = element_geometry(*source_, hit.triangle);
    return element_gradient(*source_, g, hit.triangle, *field_);
  }

  const Mesh& source() const { return *source_; }

 private:
  const Mesh* source_;
  const ScalarField* field_;
  PointLocator locator_;
};

inline ScalarField evaluate_on_mesh(const FieldSampler& sampler, const Mesh& target) {
  ScalarField out(target.node_count());
  for (std::size_t i = 0; i < target.node_count(); ++i) out[i] = sampler.value(target.node(i));
  return out;
}

inline ScalarField evaluate_on_mesh(const Mesh& source, const ScalarField& field, const Mesh& target) {
  return evaluate_on_mesh(FieldSampler(source, field), target);
}

}  // namespace shapeflow
