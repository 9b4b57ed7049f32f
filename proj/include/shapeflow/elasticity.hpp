#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "error.hpp"
#include "fem.hpp"
#include "fields.hpp"
#include "log.hpp"
#include "mesh.hpp"
#include "shape_calculus.hpp"

namespace shapeflow {

/// Nodal Lamé μ with the bounds it was computed from.
struct MuField {
  ScalarField values;
  double mu_min = 0.0;
  double mu_max = 0.0;
};

/// Harmonic μ: Δμ = 0 with μ = μ_max on interface nodes and μ = μ_min on the
/// outer boundary. The discrete maximum principle is checked; violations
/// beyond 1e-10 throw NumericalError when `strict` is set and are clamped
/// (with a warning) otherwise.
inline MuField compute_mu(const Mesh& mesh, double mu_min, double mu_max, bool strict = true) {
  if (!(mu_min > 0.0) || !(mu_min <= mu_max)) throw ConfigError("require 0 < mu_min <= mu_max");
  const auto n = mesh.node_count();
  MuField mu;
  mu.mu_min = mu_min;
  mu.mu_max = mu_max;
  mu.values = ScalarField(n);

  std::vector<int> free_index(n, -1);
  int nfree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mesh.is_interface_node(i)) mu.values[i] = mu_max;
    else if (mesh.is_boundary_node(i)) mu.values[i] = mu_min;
    else free_index[i] = nfree++;
  }
  if (nfree > 0 && mu_min != mu_max) {
    const SparseMatrix k = assemble_stiffness(mesh, std::vector<double>(mesh.triangle_count(), 1.0));
    Triplets trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nfree);
    for (Eigen::Index c = 0; c < k.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(k, c); it; ++it) {
        const int fi = free_index[it.row()];
        if (fi < 0) continue;
        const int fj = free_index[it.col()];
        if (fj >= 0) trip.emplace_back(fi, fj, it.value());
        else rhs[fi] -= it.value() * mu.values[it.col()];
      }
    SparseMatrix kr(nfree, nfree);
    kr.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(kr);
    if (ldlt.info() != Eigen::Success) throw NumericalError("mu Poisson factorization failed");
    const Eigen::VectorXd sol = ldlt.solve(rhs);
    for (std::size_t i = 0; i < n; ++i)
      if (free_index[i] >= 0) mu.values[i] = sol[free_index[i]];
  } else if (nfree > 0) {
    for (std::size_t i = 0; i < n; ++i)
      if (free_index[i] >= 0) mu.values[i] = mu_min;
  }

  constexpr double eps = 1e-10;
  const double lo = mu.values.values.minCoeff(), hi = mu.values.values.maxCoeff();
  if (lo < mu_min - eps || hi > mu_max + eps) {
    if (strict)
      throw NumericalError("mu violates the maximum principle: range [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "]");
    logger().warn("mu range [{}, {}] outside [{}, {}]; clamping", lo, hi, mu_min, mu_max);
    mu.values.values = mu.values.values.cwiseMax(mu_min).cwiseMin(mu_max);
  }
  return mu;
}

/// a(V, W) = ∫ 2μ ε(V):ε(W) over the full vector P1 space (no boundary
/// elimination), interleaved dof ordering.
inline SparseMatrix assemble_elasticity(const Mesh& mesh, const MuField& mu) {
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  if (mu.values.size() != mesh.node_count()) throw Error("elasticity: mu size mismatch");
  Triplets trip;
  trip.reserve(36 * mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto g = element_geometry(mesh, t);
    const double mu_t = (mu.values[tri[0]] + mu.values[tri[1]] + mu.values[tri[2]]) / 3.0;
    if (!(mu_t > 0.0)) throw NumericalError("elasticity: mu must be positive");
    const double scale = mu_t * g.area;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const double gg = g.grad.row(j).dot(g.grad.row(k));
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const double v = scale * ((a == b ? gg : 0.0) + g.grad(j, b) * g.grad(k, a));
            trip.emplace_back(2 * tri[j] + a, 2 * tri[k] + b, v);
          }
      }
  }
  SparseMatrix k(2 * n, 2 * n);
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// Deformation solve a(V, W) = rhs·W for all W vanishing on ∂D.
class DeformationSolver {
 public:
  static constexpr double tolerance = 1e-9;

  DeformationSolver(const Mesh& mesh, const MuField& mu) : full_(assemble_elasticity(mesh, mu)) {
    const auto n = mesh.node_count();
    free_.assign(2 * n, -1);
    for (std::size_t i = 0; i < n; ++i)
      if (!mesh.is_boundary_node(i)) {
        free_[2 * i] = nfree_++;
        free_[2 * i + 1] = nfree_++;
      }
    Triplets trip;
    for (Eigen::Index c = 0; c < full_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(full_, c); it; ++it) {
        const int fi = free_[it.row()], fj = free_[it.col()];
        if (fi >= 0 && fj >= 0) trip.emplace_back(fi, fj, it.value());
      }
    reduced_.resize(nfree_, nfree_);
    reduced_.setFromTriplets(trip.begin(), trip.end());
    cg_.setTolerance(tolerance);
    cg_.setMaxIterations(std::max<Eigen::Index>(1000, 4 * nfree_));
    cg_.compute(reduced_);
  }

  VectorField solve(const ShapeDerivative& rhs) const {
    if (rhs.rhs.size() != full_.rows()) throw Error("deformation: rhs size mismatch");
    Eigen::VectorXd b(nfree_);
    for (std::size_t i = 0; i < free_.size(); ++i)
      if (free_[i] >= 0) b[free_[i]] = rhs.rhs[static_cast<Eigen::Index>(i)];
    VectorField v(free_.size() / 2);
    if (nfree_ == 0 || b.lpNorm<Eigen::Infinity>() == 0.0) return v;
    const Eigen::VectorXd x = cg_.solve(b);
    const double res = (reduced_ * x - b).norm() / b.norm();
    if (cg_.info() != Eigen::Success || !(res <= 10.0 * tolerance))
      throw NumericalError("deformation CG did not converge after " + std::to_string(cg_.iterations()) +
                               " iterations",
                           res);
    for (std::size_t i = 0; i < free_.size(); ++i)
      if (free_[i] >= 0) v.values[static_cast<Eigen::Index>(i)] = x[free_[i]];
    return v;
  }

  /// a(V, V).
  double energy(const VectorField& v) const { return v.values.dot(full_ * v.values); }

  const SparseMatrix& matrix() const { return full_; }

 private:
  SparseMatrix full_;
  SparseMatrix reduced_;
  std::vector<int> free_;
  Eigen::Index nfree_ = 0;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg_;
};

inline VectorField solve_deformation(const Mesh& mesh, const MuField& mu, const ShapeDerivative& rhs) {
  DeformationSolver solver(mesh, mu);
  VectorField v = solver.solve(rhs);
  logger().debug("deformation: a(V,V) = {:.6e}, dJ[V] = {:.6e}", solver.energy(v), rhs.apply(v));
  return v;
}

/// ‖V‖_{H¹(D,R²)}² = Σ_components (‖V_c‖²_{L²} + |V_c|²_{H¹}).
inline double vector_h1_norm(const Mesh& mesh, const VectorField& v) {
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  const SparseMatrix m = assemble_mass(mesh);
  const SparseMatrix k = assemble_stiffness(mesh, std::vector<double>(mesh.triangle_count(), 1.0));
  double s = 0.0;
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd comp(n);
    for (Eigen::Index i = 0; i < n; ++i) comp[i] = v.values[2 * i + c];
    s += comp.dot(m * comp) + comp.dot(k * comp);
  }
  return std::sqrt(std::max(0.0, s));
}

struct DeformationNorms {
  double energy = 0.0;  ///< √a(V, V): the metric norm of the induced tangent vector
  double h1 = 0.0;      ///< ‖V‖_{H¹}
};

inline DeformationNorms g_norm(const Mesh& mesh, const MuField& mu, const VectorField& v) {
  const SparseMatrix a = assemble_elasticity(mesh, mu);
  return {std::sqrt(std::max(0.0, v.values.dot(a * v.values))), vector_h1_norm(mesh, v)};
}

}  // namespace shapeflow
