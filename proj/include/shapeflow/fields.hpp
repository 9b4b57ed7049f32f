#pragma once

#include <cstddef>

#include <Eigen/Core>

#include "geometry.hpp"

namespace shapeflow {

/// P1 nodal coefficients of a scalar function (one value per mesh node).
struct ScalarField {
  Eigen::VectorXd values;

  ScalarField() = default;
  explicit ScalarField(std::size_t n) : values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
  explicit ScalarField(Eigen::VectorXd v) : values(std::move(v)) {}

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  double operator[](std::size_t i) const { return values[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values[static_cast<Eigen::Index>(i)]; }
};

/// P1 nodal coefficients of a planar vector field, stored interleaved
/// (x0, y0, x1, y1, ...). Length is twice the node count.
struct VectorField {
  Eigen::VectorXd values;

  VectorField() = default;
  explicit VectorField(std::size_t nodes)
      : values(Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(nodes))) {}
  explicit VectorField(Eigen::VectorXd v) : values(std::move(v)) {}

  std::size_t node_count() const { return static_cast<std::size_t>(values.size()) / 2; }
  Vec2 at(std::size_t i) const {
    const auto k = 2 * static_cast<Eigen::Index>(i);
    return {values[k], values[k + 1]};
  }
  void set(std::size_t i, const Vec2& v) {
    const auto k = 2 * static_cast<Eigen::Index>(i);
    values[k] = v.x();
    values[k + 1] = v.y();
  }
};

}  // namespace shapeflow
