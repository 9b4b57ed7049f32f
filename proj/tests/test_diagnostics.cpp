#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include <shapeflow/diagnostics.hpp>

#include "support.hpp"

using namespace shapeflow;
using testing_support::disk_mesh;

namespace {

struct Problem {
  Mesh mesh = disk_mesh(0.05);
  ReferenceField reference{testing_support::ellipse_target_mesh(0.05),
                           solve_state(testing_support::ellipse_target_mesh(0.05), testing_support::lung_scenario())};

  OptimizerConfig config(double sigma = 1e-3) const {
    OptimizerConfig c;
    c.scenarios = testing_support::lung_spec(sigma);
    c.nu = 1e-6;
    c.schedule = StepSchedule::robbins_monro(0.016);
    c.mu_min = 5;
    c.mu_max = 17;
    c.seed = 1;
    return c;
  }
};

std::vector<Vec2> circle(Vec2 c, double r, int n) {
  std::vector<Vec2> p;
  for (int k = 0; k < n; ++k) {
    const double a = 2 * std::numbers::pi * k / n;
    p.push_back(c + r * Vec2(std::cos(a), std::sin(a)));
  }
  return p;
}

}  // namespace

TEST(ApproxDistance, SquareAgainstPoint) {
  const std::vector<Vec2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  // midpoints at distance 1/2, √5/2, √5/2, 1/2 from the origin, unit lengths
  EXPECT_NEAR(approx_distance({square}, {{Vec2(0, 0)}}), 1.0 + std::sqrt(5.0), 1e-14);
}

TEST(ApproxDistance, CircleAgainstItselfAndShifted) {
  const double r = 0.2;
  const auto c = circle({0, 0}, r, 400);
  // the farthest point of a circle is the antipode: d(u, u) ≈ 2πr · 2r
  EXPECT_NEAR(approx_distance({c}, {c}), 4 * std::numbers::pi * r * r, 1e-3);
  const auto shifted = circle({0.1, 0}, r, 400);
  EXPECT_GT(approx_distance({c}, {shifted}), approx_distance({c}, {c}));
  EXPECT_THROW(approx_distance({}, {c}), Error);
}

TEST(ApproxDistance, FarTranslationAndReversal) {
  const double r = 0.2, far = 100.0;
  const auto c = circle({0, 0}, r, 200);
  const auto moved = circle({far, 0}, r, 200);
  const double perimeter = 200 * 2 * r * std::sin(std::numbers::pi / 200);
  EXPECT_NEAR(approx_distance({c}, {moved}) / (perimeter * far), 1.0, 2 * r / far);
  auto reversed = moved;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_NEAR(approx_distance({c}, {reversed}), approx_distance({c}, {moved}), 1e-12);
}

TEST(ApproxDistance, MeshOverloadUsesLoops) {
  const Mesh m = disk_mesh(0.05);
  EXPECT_DOUBLE_EQ(approx_distance(m, m), approx_distance(loop_sets(m), loop_sets(m)));
  EXPECT_NEAR(approx_distance(m, m), 4 * std::numbers::pi * 0.04, 0.01);
}

TEST(MeanSqrtDJ, ZeroDirection) {
  Problem p;
  const auto cfg = p.config();
  const auto ctx = DiagnosticContext::from(cfg, p.reference);
  const auto r = mean_sqrt_dJ(p.mesh, VectorField(p.mesh.node_count()), 10, RngState::make(1, streams::diagnostics, 0), ctx);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.std_error, 0.0);
  EXPECT_THROW(mean_sqrt_dJ(p.mesh, VectorField(p.mesh.node_count()), 0, RngState{}, ctx), ConfigError);
}

TEST(MeanSqrtDJ, DeterministicScenarioGivesExactRoot) {
  Problem p;
  auto cfg = p.config();
  cfg.scenarios.kappa = {{"trunk", 1.0}, {"lungs", 0.005}};
  const auto ctx = DiagnosticContext::from(cfg, p.reference);
  const Scenario s = testing_support::lung_scenario();
  const VectorField v = ctx.deformation(p.mesh, s);
  const double dj = ctx.derivative(p.mesh, s).apply(v);
  ASSERT_GT(dj, 0.0);
  const auto r = mean_sqrt_dJ(p.mesh, v, 5, RngState::make(1, streams::diagnostics, 0), ctx);
  EXPECT_NEAR(r.mean, std::sqrt(dj), 1e-12 * std::sqrt(dj));
  EXPECT_NEAR(r.std_error, 0.0, 1e-12 * std::sqrt(dj));
  EXPECT_EQ(r.clamped, 0u);
  VectorField minus(p.mesh.node_count());
  minus.values = -v.values;
  const auto neg = mean_sqrt_dJ(p.mesh, minus, 3, RngState::make(1, streams::diagnostics, 0), ctx);
  EXPECT_EQ(neg.clamped, 3u);
  EXPECT_EQ(neg.mean, 0.0);
}

TEST(MeanSqrtDJ, StandardErrorShrinksLikeInverseRootM) {
  Problem p;
  const auto cfg = p.config(1e-3);
  const auto ctx = DiagnosticContext::from(cfg, p.reference);
  const VectorField v = ctx.deformation(p.mesh, testing_support::lung_scenario());
  double se50 = 0.0, se200 = 0.0;
  const int runs = 20;
  for (int k = 0; k < runs; ++k) {
    const std::uint64_t base = static_cast<std::uint64_t>(k) * 1000;
    se50 += mean_sqrt_dJ(p.mesh, v, 50, RngState::make(9, streams::diagnostics, base), ctx).std_error;
    se200 += mean_sqrt_dJ(p.mesh, v, 200, RngState::make(9, streams::diagnostics, base + 500), ctx).std_error;
  }
  ASSERT_GT(se200, 0.0);
  const double ratio = se50 / se200;
  EXPECT_GE(ratio, 1.7);
  EXPECT_LE(ratio, 2.3);
}

TEST(LipschitzStudy, SkipsUnmovedShapesAndIsDeterministic) {
  Problem p;
  auto cfg = p.config();
  const auto ctx = DiagnosticContext::from(cfg, p.reference);
  cfg.iterations = 3;
  const auto report = run(p.mesh, cfg, p.reference);
  const std::vector<ShapeSnapshot> snaps{{0, p.mesh}, {1, p.mesh}, {3, report.final_mesh}};
  const auto rows = lipschitz_study(snaps, 5, 1, ctx);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].n, 3u);
  EXPECT_NEAR(rows[0].L, (rows[0].mean_sqrt_dJ_n + rows[0].mean_sqrt_dJ_1) / rows[0].d_approx, 1e-14 * rows[0].L);
  EXPECT_GT(rows[0].L, 0.0);
  const auto again = lipschitz_study(snaps, 5, 1, ctx);
  EXPECT_EQ(again[0].L, rows[0].L);
  EXPECT_THROW(lipschitz_study({snaps[0]}, 5, 1, ctx), Error);
}

TEST(SecondMoment, DeterministicScenarioEqualsEnergy) {
  Problem p;
  auto cfg = p.config();
  cfg.scenarios.kappa = {{"trunk", 1.0}, {"lungs", 0.005}};
  const auto ctx = DiagnosticContext::from(cfg, p.reference);
  const Scenario s = testing_support::lung_scenario();
  const VectorField v = ctx.deformation(p.mesh, s);
  const double dj = ctx.derivative(p.mesh, s).apply(v);
  const auto rows = second_moment_study({{0, p.mesh}}, 4, 1, ctx);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].mean, dj, 1e-8 * dj);
  EXPECT_NEAR(rows[0].std_error, 0.0, 1e-8 * dj);
}

TEST(Statistics, LogLogSlopeAndMedian) {
  std::vector<double> x{1e-3, 1e-2, 1e-1, 1.0}, y;
  for (double v : x) y.push_back(3 * v * v);
  EXPECT_NEAR(loglog_slope(x, y), 2.0, 1e-12);
  y[0] = -1.0;  // dropped
  EXPECT_NEAR(loglog_slope(x, y), 2.0, 1e-12);
  EXPECT_TRUE(std::isnan(loglog_slope({1.0}, {1.0})));
  EXPECT_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}
