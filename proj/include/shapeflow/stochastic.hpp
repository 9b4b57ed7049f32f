#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "fem.hpp"

namespace shapeflow {

/// Philox4x64-10 counter-based generator (Salmon et al., SC'11); matches the
/// Random123 known-answer vectors.
class Philox4x64 {
 public:
  using Counter = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B97F4A7C15ULL;
        key[1] += 0xBB67AE8584CAA73BULL;
      }
      const auto p0 = static_cast<unsigned __int128>(0xD2E7470EE14C6C93ULL) * ctr[0];
      const auto p1 = static_cast<unsigned __int128>(0xCA5A826395121157ULL) * ctr[2];
      const auto hi0 = static_cast<std::uint64_t>(p0 >> 64), lo0 = static_cast<std::uint64_t>(p0);
      const auto hi1 = static_cast<std::uint64_t>(p1 >> 64), lo1 = static_cast<std::uint64_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

/// Position in a reproducible random stream. Draws for block b (an optimizer
/// iteration, a diagnostic sample, ...) use counters (i, b, stream, 0) under
/// the key (seed, 0), so blocks never overlap and can be generated in any order.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t block = 0;
  std::uint64_t position = 0;  ///< 64-bit words consumed within the block

  static RngState make(std::uint64_t seed, std::uint64_t stream, std::uint64_t block) {
    return RngState{seed, stream, block, 0};
  }

  std::uint64_t next_u64() {
    const Philox4x64::Counter ctr{position / 4, block, stream, 0};
    const auto out = Philox4x64::generate(ctr, {seed, 0});
    return out[position++ % 4];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (cosine branch only; two words per draw).
  double normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

/// N(ρ, σ, a, b): normal with location ρ and scale σ conditioned on [a, b].
struct TruncatedNormalSpec {
  double rho = 0.0;
  double sigma = 1.0;
  double a = -INFINITY;
  double b = INFINITY;

  void validate() const {
    if (!(sigma > 0.0)) throw ConfigError("truncated normal: sigma must be positive");
    if (!(a < b)) throw ConfigError("truncated normal: require a < b");
  }
};

inline constexpr std::size_t max_rejections = 1000000;

/// Rejection sampling from the untruncated normal.
inline double sample_truncated_normal(const TruncatedNormalSpec& spec, RngState& rng) {
  spec.validate();
  for (std::size_t k = 0; k < max_rejections; ++k) {
    const double x = spec.rho + spec.sigma * rng.normal();
    if (x >= spec.a && x <= spec.b) return x;
  }
  throw SamplingError("truncated normal rejection cap reached (acceptance region too unlikely)");
}

/// A scalar input: deterministic constant or truncated-normal random variable.
using CoefficientSpec = std::variant<double, TruncatedNormalSpec>;

inline double draw(const CoefficientSpec& spec, RngState& rng) {
  if (const auto* c = std::get_if<double>(&spec)) return *c;
  return sample_truncated_normal(std::get<TruncatedNormalSpec>(spec), rng);
}

inline double mean_value(const CoefficientSpec& spec) {
  if (const auto* c = std::get_if<double>(&spec)) return *c;
  return std::get<TruncatedNormalSpec>(spec).rho;
}

/// Boundary flux model: a single (possibly random) value, or independent
/// values per angular sector around `center`.
struct BoundarySpec {
  CoefficientSpec value = 0.0;
  std::vector<CoefficientSpec> sectors;
  Vec2 center = Vec2::Zero();
};

struct ScenarioSpec {
  std::map<std::string, CoefficientSpec> kappa;
  BoundarySpec g;
};

/// Draws one scenario. Conductivities are drawn in region-name order, then g.
inline Scenario draw_scenario(const ScenarioSpec& spec, RngState& rng) {
  Scenario s;
  for (const auto& [name, c] : spec.kappa) s.kappa[name] = draw(c, rng);
  if (spec.g.sectors.empty()) {
    s.g = BoundaryData::uniform(draw(spec.g.value, rng));
  } else {
    s.g.center = spec.g.center;
    for (const auto& c : spec.g.sectors) s.g.sectors.push_back(draw(c, rng));
  }
  return s;
}

/// Scenario with every random input replaced by its location parameter ρ.
inline Scenario mean_scenario(const ScenarioSpec& spec) {
  Scenario s;
  for (const auto& [name, c] : spec.kappa) s.kappa[name] = mean_value(c);
  if (spec.g.sectors.empty()) {
    s.g = BoundaryData::uniform(mean_value(spec.g.value));
  } else {
    s.g.center = spec.g.center;
    for (const auto& c : spec.g.sectors) s.g.sectors.push_back(mean_value(c));
  }
  return s;
}

/// Stream identifiers, one per consumer of randomness.
namespace streams {
inline constexpr std::uint64_t optimizer = 1;
inline constexpr std::uint64_t diagnostics = 2;
inline constexpr std::uint64_t lipschitz_reference = 3;
inline constexpr std::uint64_t fd_check = 4;
}  // namespace streams

}  // namespace shapeflow
