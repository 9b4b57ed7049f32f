#pragma once

#include <array>
#include <cmath>

namespace shapeflow::quadrature {

/// Point of a triangle rule in barycentric coordinates; weights sum to one and
/// are multiplied by the triangle area.
struct TrianglePoint {
  std::array<double, 3> bary;
  double weight;
};

/// Edge-midpoint rule, exact for quadratics.
inline constexpr std::array<TrianglePoint, 3> order2{{
    {{0.5, 0.5, 0.0}, 1.0 / 3.0},
    {{0.0, 0.5, 0.5}, 1.0 / 3.0},
    {{0.5, 0.0, 0.5}, 1.0 / 3.0},
}};

/// Radon's seven-point rule, exact for quintics.
inline const std::array<TrianglePoint, 7>& order5() {
  static const std::array<TrianglePoint, 7> rule = [] {
    const double s = std::sqrt(15.0);
    const double a1 = (6.0 - s) / 21.0, a2 = (6.0 + s) / 21.0;
    const double w1 = (155.0 - s) / 1200.0, w2 = (155.0 + s) / 1200.0;
    return std::array<TrianglePoint, 7>{{
        {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 9.0 / 40.0},
        {{a1, a1, 1.0 - 2.0 * a1}, w1},
        {{a1, 1.0 - 2.0 * a1, a1}, w1},
        {{1.0 - 2.0 * a1, a1, a1}, w1},
        {{a2, a2, 1.0 - 2.0 * a2}, w2},
        {{a2, 1.0 - 2.0 * a2, a2}, w2},
        {{1.0 - 2.0 * a2, a2, a2}, w2},
    }};
  }();
  return rule;
}

/// Two-point Gauss rule on [0, 1]: parameters and weights (sum to one).
inline const std::array<std::array<double, 2>, 2>& gauss2() {
  static const std::array<std::array<double, 2>, 2> rule = [] {
    const double d = 0.5 / std::sqrt(3.0);
    return std::array<std::array<double, 2>, 2>{{{0.5 - d, 0.5}, {0.5 + d, 0.5}}};
  }();
  return rule;
}

}  // namespace shapeflow::quadrature
