#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include <shapeflow/stochastic.hpp>

#include "support.hpp"

using namespace shapeflow;

namespace {

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }
double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Closed-form mean and variance of N(ρ, σ) conditioned on [a, b].
std::pair<double, double> truncated_moments(const TruncatedNormalSpec& s) {
  const double al = (s.a - s.rho) / s.sigma, be = (s.b - s.rho) / s.sigma;
  const double z = Phi(be) - Phi(al);
  const double m = (phi(al) - phi(be)) / z;
  const double v = 1.0 + (al * phi(al) - be * phi(be)) / z - m * m;
  return {s.rho + s.sigma * m, s.sigma * s.sigma * v};
}

}  // namespace

TEST(Philox, KnownAnswerVectors) {
  using C = Philox4x64::Counter;
  EXPECT_EQ(Philox4x64::generate(C{0, 0, 0, 0}, {0, 0}),
            (C{0x16554d9eca36314cULL, 0xdb20fe9d672d0fdcULL, 0xd7e772cee186176bULL, 0x7e68b68aec7ba23bULL}));
  const std::uint64_t f = ~0ULL;
  EXPECT_EQ(Philox4x64::generate(C{f, f, f, f}, {f, f}),
            (C{0x87b092c3013fe90bULL, 0x438c3c67be8d0224ULL, 0x9cc7d7c69cd777b6ULL, 0xa09caebf594f0ba0ULL}));
  EXPECT_EQ(Philox4x64::generate(C{0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL,
                                   0x082efa98ec4e6c89ULL},
                                 {0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL}),
            (C{0xa528f45403e61d95ULL, 0x38c72dbd566e9788ULL, 0xa5a1610e72fd18b5ULL, 0x57bd43b5e52b7fe6ULL}));
}

TEST(RngState, BlocksAndStreamsAreIndependentAndReproducible) {
  RngState a = RngState::make(1, streams::optimizer, 5);
  RngState b = RngState::make(1, streams::optimizer, 5);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 16u);
  for (auto other : {RngState::make(1, streams::optimizer, 6), RngState::make(1, streams::diagnostics, 5),
                     RngState::make(2, streams::optimizer, 5)}) {
    RngState r = RngState::make(1, streams::optimizer, 5);
    EXPECT_NE(r.next_u64(), other.next_u64());
  }
}

TEST(RngState, UniformAndNormalMoments) {
  RngState r = RngState::make(42, 0, 0);
  const int n = 200000;
  double su = 0, su2 = 0, sn = 0, sn2 = 0, sn4 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u, su2 += u * u;
    const double z = r.normal();
    sn += z, sn2 += z * z, sn4 += z * z * z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(su2 / n, 1.0 / 3, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 5 / std::sqrt(n));
  EXPECT_NEAR(sn2 / n, 1.0, 5 * std::sqrt(2.0 / n));
  EXPECT_NEAR(sn4 / n, 3.0, 5 * std::sqrt(96.0 / n));
}

TEST(TruncatedNormal, SupportAndMoments) {
  for (const TruncatedNormalSpec& s : {TruncatedNormalSpec{1.0, 0.2, 0.7, 1.3}, TruncatedNormalSpec{0.0, 1.0, 0.5, 3.0},
                                       TruncatedNormalSpec{0.005, 0.01, 2.5e-3, 7.5e-3}}) {
    const auto [mean, var] = truncated_moments(s);
    RngState r = RngState::make(7, 0, 0);
    const int n = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_truncated_normal(s, r);
      ASSERT_GE(x, s.a);
      ASSERT_LE(x, s.b);
      sum += x, sum2 += x * x;
    }
    const double m = sum / n, v = sum2 / n - m * m;
    EXPECT_NEAR(m, mean, 5 * std::sqrt(var / n)) << s.rho << " " << s.sigma;
    EXPECT_NEAR(v, var, 0.02 * var) << s.rho << " " << s.sigma;
  }
}

TEST(TruncatedNormal, RejectionCapAndValidation) {
  RngState r = RngState::make(1, 0, 0);
  EXPECT_THROW(sample_truncated_normal({0.0, 1.0, 40.0, 41.0}, r), SamplingError);
  EXPECT_THROW(sample_truncated_normal({0.0, 0.0, -1.0, 1.0}, r), ConfigError);
  EXPECT_THROW(sample_truncated_normal({0.0, 1.0, 1.0, 1.0}, r), ConfigError);
}

TEST(Scenario, DrawsStayInRangeAndMeanUsesLocation) {
  const ScenarioSpec spec = testing_support::lung_spec(1e-3);
  for (std::uint64_t block = 0; block < 200; ++block) {
    RngState r = RngState::make(3, streams::optimizer, block);
    const Scenario s = draw_scenario(spec, r);
    EXPECT_GE(s.kappa.at("trunk"), 0.7);
    EXPECT_LE(s.kappa.at("trunk"), 1.3);
    EXPECT_GE(s.kappa.at("lungs"), 2.5e-3);
    EXPECT_LE(s.kappa.at("lungs"), 7.5e-3);
    EXPECT_EQ(s.g({0, 0}), 10.0);
  }
  const Scenario m = mean_scenario(spec);
  EXPECT_EQ(m.kappa.at("trunk"), 1.0);
  EXPECT_EQ(m.kappa.at("lungs"), 0.005);
}

TEST(Scenario, SectorFluxDrawsEachSector) {
  ScenarioSpec spec;
  spec.kappa["out"] = 1.0;
  spec.g.sectors = {TruncatedNormalSpec{1.0, 0.1, 0.5, 1.5}, 2.0, TruncatedNormalSpec{-1.0, 0.1, -1.5, -0.5}};
  RngState r = RngState::make(3, 0, 0);
  const Scenario s = draw_scenario(spec, r);
  ASSERT_EQ(s.g.sectors.size(), 3u);
  EXPECT_EQ(s.g.sectors[1], 2.0);
  EXPECT_NEAR(s.g.sectors[0], 1.0, 0.5);
  EXPECT_NEAR(s.g.sectors[2], -1.0, 0.5);
}

TEST(Scenario, ConsecutiveBlocksAreUncorrelated) {
  const ScenarioSpec spec = testing_support::lung_spec(1e-3);
  const int n = 10000;
  for (const char* region : {"trunk", "lungs"}) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) {
      RngState r = RngState::make(1, streams::optimizer, static_cast<std::uint64_t>(i + 1));
      x[i] = draw_scenario(spec, r).kappa.at(region);
    }
    double mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    double c0 = 0, c1 = 0;
    for (int i = 0; i < n; ++i) {
      c0 += (x[i] - mean) * (x[i] - mean);
      if (i + 1 < n) c1 += (x[i] - mean) * (x[i + 1] - mean);
    }
    EXPECT_LE(std::abs(c1 / c0), 0.03) << region;
  }
}

TEST(Scenario, DeterministicSpecReturnsConstants) {
  ScenarioSpec spec;
  spec.kappa["trunk"] = 1.0;
  spec.kappa["lungs"] = 0.005;
  spec.g.value = 10.0;
  for (std::uint64_t block = 0; block < 5; ++block) {
    RngState r = RngState::make(block, streams::optimizer, block);
    const Scenario s = draw_scenario(spec, r);
    EXPECT_EQ(s.kappa.at("trunk"), 1.0);
    EXPECT_EQ(s.kappa.at("lungs"), 0.005);
    EXPECT_EQ(s.g({0.3, -0.2}), 10.0);
  }
}

TEST(TruncatedNormal, NarrowIntervalStaysInside) {
  const TruncatedNormalSpec s{0.0, 1.0, -5e-4, 5e-4};
  RngState r = RngState::make(4, 0, 0);
  for (int i = 0; i < 200; ++i) {
    const double x = sample_truncated_normal(s, r);
    EXPECT_GE(x, s.a);
    EXPECT_LE(x, s.b);
  }
}
