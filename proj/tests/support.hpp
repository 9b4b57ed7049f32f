#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <shapeflow/mesh_generator.hpp>
#include <shapeflow/stochastic.hpp>

namespace testing_support {

using namespace shapeflow;

/// Circle of radius 0.2 in [-1,0] x [-0.5,0.5], outer region "trunk".
inline Mesh disk_mesh(double h, double radius = 0.2, Vec2 center = {-0.5, 0.0}) {
  GeneratorOptions opt;
  opt.outer_region = "trunk";
  return generate_fitted_mesh(RectangleDomain{-1, 0, -0.5, 0.5}, {LoopSpec{CircleLoop{center, radius, 0}, "lungs"}},
                              h, opt);
}

inline Mesh ellipse_target_mesh(double h) {
  GeneratorOptions opt;
  opt.outer_region = "trunk";
  return generate_fitted_mesh(RectangleDomain{-1, 0, -0.5, 0.5},
                              {LoopSpec{EllipseLoop{{-0.5, 0.05}, 0.25, 0.15, 0.3, 0}, "lungs"}}, h, opt);
}

inline Scenario lung_scenario(double kt = 1.0, double kl = 0.005, double g = 10.0) {
  Scenario s;
  s.kappa = {{"trunk", kt}, {"lungs", kl}};
  s.g = BoundaryData::uniform(g);
  return s;
}

inline ScenarioSpec lung_spec(double sigma = 1e-4) {
  ScenarioSpec s;
  s.kappa["trunk"] = TruncatedNormalSpec{1.0, sigma, 0.7, 1.3};
  s.kappa["lungs"] = TruncatedNormalSpec{0.005, sigma, 2.5e-3, 7.5e-3};
  s.g.value = 10.0;
  return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("shapeflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Smooth vector field vanishing on the boundary nodes of `mesh`.
inline VectorField bump_field(const Mesh& mesh, Vec2 center, double radius, Vec2 direction) {
  VectorField v(mesh.node_count());
  for (std::size_t i = 0; i < mesh.node_count(); ++i) {
    if (mesh.is_boundary_node(i)) continue;
    const double r = (mesh.node(i) - center).norm() / radius;
    if (r < 1.0) v.set(i, std::pow(1.0 - r * r, 2) * direction);
  }
  return v;
}

}  // namespace testing_support
