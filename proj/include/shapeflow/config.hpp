#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "error.hpp"
#include "mesh_generator.hpp"
#include "mesh_io.hpp"
#include "optimizer.hpp"
#include "shape_calculus.hpp"
#include "stochastic.hpp"

namespace shapeflow {

/// Everything a run needs, read from an INI file. See configs/*.ini for the
/// documented keys.
struct RunConfig {
  OuterDomain domain = RectangleDomain{};
  double h = 0.05;
  std::string outer_region = "out";

  std::vector<LoopSpec> initial_loops;
  std::filesystem::path initial_mesh;  ///< overrides initial_loops when set

  std::vector<LoopSpec> target_loops;
  std::filesystem::path target_mesh;
  double target_h = 0.0;  ///< 0: same as h
  std::filesystem::path reference;  ///< ȳ file written by gen-target

  OptimizerConfig optimizer;

  std::size_t samples = 100;            ///< m for the diagnostic sample averages
  std::size_t lipschitz_stride = 10;    ///< iterations between Lipschitz-study shapes
  std::size_t moment_checkpoints = 5;   ///< shapes for the second-moment study

  std::vector<double> fd_steps{1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5};
};

namespace config_detail {

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> w;
  for (std::string t; in >> t;) w.push_back(t);
  return w;
}

inline double number(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
}

inline std::vector<double> numbers(const std::vector<std::string>& w, std::size_t from, const std::string& key) {
  std::vector<double> v;
  for (std::size_t i = from; i < w.size(); ++i) v.push_back(number(w[i], key));
  return v;
}

inline std::uint64_t unsigned_integer(const std::string& s, const std::string& key) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range");
  }
}

}  // namespace config_detail

/// `<region> circle cx cy r [segments]`, `<region> ellipse cx cy a b [angle [segments]]`
/// or `<region> polygon x1 y1 x2 y2 ...`.
inline LoopSpec parse_loop(const std::string& text, const std::string& key) {
  using namespace config_detail;
  const auto w = words(text);
  if (w.size() < 2) throw ConfigError(key + ": expected '<region> <shape> ...'");
  LoopSpec spec;
  spec.region = w[0];
  const auto v = numbers(w, 2, key);
  if (w[1] == "circle") {
    if (v.size() != 3 && v.size() != 4) throw ConfigError(key + ": circle takes cx cy r [segments]");
    if (!(v[2] > 0.0)) throw ConfigError(key + ": radius must be positive");
    spec.shape = CircleLoop{{v[0], v[1]}, v[2], v.size() == 4 ? static_cast<int>(v[3]) : 0};
  } else if (w[1] == "ellipse") {
    if (v.size() < 4 || v.size() > 6) throw ConfigError(key + ": ellipse takes cx cy a b [angle [segments]]");
    if (!(v[2] > 0.0) || !(v[3] > 0.0)) throw ConfigError(key + ": semi-axes must be positive");
    spec.shape = EllipseLoop{{v[0], v[1]}, v[2], v[3], v.size() > 4 ? v[4] : 0.0, v.size() > 5 ? static_cast<int>(v[5]) : 0};
  } else if (w[1] == "polygon") {
    if (v.size() < 6 || v.size() % 2) throw ConfigError(key + ": polygon needs at least three x y pairs");
    PolylineLoop p;
    for (std::size_t i = 0; i < v.size(); i += 2) p.points.emplace_back(v[i], v[i + 1]);
    spec.shape = std::move(p);
  } else {
    throw ConfigError(key + ": unknown loop shape '" + w[1] + "'");
  }
  return spec;
}

/// A constant (`10`) or `truncnormal rho sigma a b`.
inline CoefficientSpec parse_coefficient(const std::string& text, const std::string& key) {
  using namespace config_detail;
  const auto w = words(text);
  if (w.size() == 1) return number(w[0], key);
  if (w.size() == 5 && w[0] == "truncnormal") {
    const auto v = numbers(w, 1, key);
    TruncatedNormalSpec s{v[0], v[1], v[2], v[3]};
    try {
      s.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
    return s;
  }
  throw ConfigError(key + ": expected a number or 'truncnormal rho sigma a b'");
}

/// `robbins_monro t0`, `constant t` or `power t0 alpha`.
inline StepSchedule parse_schedule(const std::string& text) {
  using namespace config_detail;
  const auto w = words(text);
  const std::string key = "optimizer.schedule";
  StepSchedule s;
  if (w.size() == 2 && w[0] == "robbins_monro") s = StepSchedule::robbins_monro(number(w[1], key));
  else if (w.size() == 2 && w[0] == "constant") s = StepSchedule::constant(number(w[1], key));
  else if (w.size() == 3 && w[0] == "power") s = StepSchedule::power(number(w[1], key), number(w[2], key));
  else throw ConfigError(key + ": expected 'robbins_monro t0', 'constant t' or 'power t0 alpha'");
  s.validate();
  return s;
}

/// `none` or `interface_band k`.
inline Restriction parse_restriction(const std::string& text) {
  const auto w = config_detail::words(text);
  if (w.size() == 1 && w[0] == "none") return Restriction::none();
  if (w.size() == 2 && w[0] == "interface_band")
    return Restriction::interface_band(static_cast<int>(config_detail::unsigned_integer(w[1], "optimizer.restriction")));
  throw ConfigError("optimizer.restriction: expected 'none' or 'interface_band k'");
}

inline RunConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  using namespace config_detail;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  static const std::set<std::string> sections{"domain", "initial", "target", "scenario", "optimizer", "output",
                                              "diagnostics", "fd_check"};
  for (const auto& [name, _] : tree)
    if (!sections.count(name)) throw ConfigError("config: unknown section [" + name + "]");

  RunConfig cfg;
  auto section = [&](const std::string& name) -> const pt::ptree& {
    static const pt::ptree empty;
    const auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };
  // Keys are read by iteration so that dotted names (kappa.trunk) stay literal.
  auto entries = [&](const std::string& name, const std::set<std::string>& allowed, const std::string& prefix_ok = "") {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : section(name)) {
      const bool prefixed = !prefix_ok.empty() && k.rfind(prefix_ok, 0) == 0;
      if (!allowed.count(k) && !prefixed) throw ConfigError("config: unknown key " + name + "." + k);
      out.emplace_back(k, v.data());
    }
    return out;
  };
  auto find = [](const auto& list, const std::string& key) -> std::optional<std::string> {
    for (const auto& [k, v] : list)
      if (k == key) return v;
    return std::nullopt;
  };

  // [domain]
  const auto dom = entries("domain", {"type", "x0", "x1", "y0", "y1", "a", "b", "cx", "cy", "h", "outer_region"});
  auto dnum = [&](const std::string& k, double fallback) {
    const auto v = find(dom, k);
    return v ? number(*v, "domain." + k) : fallback;
  };
  const std::string type = find(dom, "type").value_or("rectangle");
  if (type == "rectangle") {
    RectangleDomain r{dnum("x0", 0.0), dnum("x1", 1.0), dnum("y0", 0.0), dnum("y1", 1.0)};
    if (!(r.x0 < r.x1) || !(r.y0 < r.y1)) throw ConfigError("domain: require x0 < x1 and y0 < y1");
    cfg.domain = r;
  } else if (type == "ellipse") {
    EllipseDomain e{dnum("a", 1.0), dnum("b", 1.0), {dnum("cx", 0.0), dnum("cy", 0.0)}};
    if (!(e.a > 0.0) || !(e.b > 0.0)) throw ConfigError("domain: semi-axes must be positive");
    cfg.domain = e;
  } else {
    throw ConfigError("domain.type: expected 'rectangle' or 'ellipse'");
  }
  cfg.h = dnum("h", cfg.h);
  if (!(cfg.h > 0.0)) throw ConfigError("domain.h must be positive");
  cfg.outer_region = find(dom, "outer_region").value_or(cfg.outer_region);

  auto loops = [&](const std::string& name, const std::vector<std::pair<std::string, std::string>>& list) {
    std::vector<LoopSpec> out;
    for (const auto& [k, v] : list)
      if (k.rfind("loop", 0) == 0) out.push_back(parse_loop(v, name + "." + k));
    return out;
  };

  // [initial]
  const auto ini = entries("initial", {"mesh"}, "loop");
  cfg.initial_loops = loops("initial", ini);
  if (auto m = find(ini, "mesh")) cfg.initial_mesh = *m;

  // [target]
  const auto tgt = entries("target", {"mesh", "h", "reference"}, "loop");
  cfg.target_loops = loops("target", tgt);
  if (auto m = find(tgt, "mesh")) cfg.target_mesh = *m;
  if (auto v = find(tgt, "h")) cfg.target_h = number(*v, "target.h");
  if (cfg.target_h < 0.0) throw ConfigError("target.h must be nonnegative");
  cfg.reference = find(tgt, "reference").value_or("reference.json");

  // [scenario]
  auto& opt = cfg.optimizer;
  bool has_g = false;
  for (const auto& [k, v] : section("scenario")) {
    const std::string key = "scenario." + k;
    if (k.rfind("kappa.", 0) == 0) {
      opt.scenarios.kappa[k.substr(6)] = parse_coefficient(v.data(), key);
    } else if (k.rfind("g.sector.", 0) == 0) {
      opt.scenarios.g.sectors.push_back(parse_coefficient(v.data(), key));
    } else if (k == "g") {
      opt.scenarios.g.value = parse_coefficient(v.data(), key);
      has_g = true;
    } else if (k == "g.center") {
      const auto c = numbers(words(v.data()), 0, key);
      if (c.size() != 2) throw ConfigError(key + ": expected 'x y'");
      opt.scenarios.g.center = {c[0], c[1]};
    } else {
      throw ConfigError("config: unknown key " + key);
    }
  }
  if (opt.scenarios.kappa.empty()) throw ConfigError("scenario: no kappa.<region> entries");
  if (!has_g && opt.scenarios.g.sectors.empty()) throw ConfigError("scenario: missing g (or g.sector.<i> entries)");

  // [optimizer]
  const auto o = entries("optimizer", {"nu", "schedule", "mu_min", "mu_max", "mu_strict", "restriction", "iterations",
                                       "seed", "max_retries", "step_floor", "batch_size", "checkpoint_stride"});
  auto onum = [&](const std::string& k, double fallback) {
    const auto v = find(o, k);
    return v ? number(*v, "optimizer." + k) : fallback;
  };
  auto oint = [&](const std::string& k, std::uint64_t fallback) {
    const auto v = find(o, k);
    return v ? unsigned_integer(*v, "optimizer." + k) : fallback;
  };
  opt.nu = onum("nu", 0.0);
  if (auto s = find(o, "schedule")) opt.schedule = parse_schedule(*s);
  else throw ConfigError("optimizer.schedule is required");
  opt.mu_min = onum("mu_min", 1.0);
  opt.mu_max = onum("mu_max", opt.mu_min);
  if (auto s = find(o, "mu_strict")) {
    if (*s != "true" && *s != "false") throw ConfigError("optimizer.mu_strict: expected true or false");
    opt.mu_strict = *s == "true";
  }
  if (auto s = find(o, "restriction")) opt.restriction = parse_restriction(*s);
  opt.iterations = oint("iterations", 0);
  opt.seed = oint("seed", 0);
  opt.max_retries = static_cast<int>(oint("max_retries", 10));
  opt.step_floor = onum("step_floor", 1e-12);
  opt.batch_size = oint("batch_size", 1);
  opt.checkpoint_stride = oint("checkpoint_stride", 50);

  // [output]
  const auto out = entries("output", {"dir"});
  opt.output_dir = find(out, "dir").value_or("run");

  // [diagnostics]
  const auto dg = entries("diagnostics", {"samples", "lipschitz_stride", "moment_checkpoints"});
  if (auto v = find(dg, "samples")) cfg.samples = unsigned_integer(*v, "diagnostics.samples");
  if (auto v = find(dg, "lipschitz_stride")) cfg.lipschitz_stride = unsigned_integer(*v, "diagnostics.lipschitz_stride");
  if (auto v = find(dg, "moment_checkpoints"))
    cfg.moment_checkpoints = unsigned_integer(*v, "diagnostics.moment_checkpoints");
  if (cfg.samples == 0) throw ConfigError("diagnostics.samples must be positive");
  if (cfg.lipschitz_stride == 0) throw ConfigError("diagnostics.lipschitz_stride must be positive");

  // [fd_check]
  const auto fd = entries("fd_check", {"t"});
  if (auto v = find(fd, "t")) {
    cfg.fd_steps = numbers(words(*v), 0, "fd_check.t");
    for (double t : cfg.fd_steps)
      if (!(t > 0.0)) throw ConfigError("fd_check.t: steps must be positive");
  }

  opt.validate();
  if (cfg.initial_loops.empty() && cfg.initial_mesh.empty())
    throw ConfigError("initial: give a mesh file or at least one loop<i>");
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

inline GeneratorOptions generator_options(const RunConfig& cfg) {
  GeneratorOptions g;
  g.outer_region = cfg.outer_region;
  return g;
}

inline Mesh initial_mesh(const RunConfig& cfg) {
  if (!cfg.initial_mesh.empty()) return read_msh(cfg.initial_mesh);
  return generate_fitted_mesh(cfg.domain, cfg.initial_loops, cfg.h, generator_options(cfg));
}

inline Mesh target_mesh(const RunConfig& cfg) {
  if (!cfg.target_mesh.empty()) return read_msh(cfg.target_mesh);
  if (cfg.target_loops.empty()) throw ConfigError("target: give a mesh file or at least one loop<i>");
  return generate_fitted_mesh(cfg.domain, cfg.target_loops, cfg.target_h > 0.0 ? cfg.target_h : cfg.h,
                              generator_options(cfg));
}

// --- reference field files -----------------------------------------------------

/// ȳ and its mesh: <path> holds {"mesh": "<file>.msh", "values": [...]}, the
/// mesh path relative to <path>'s directory.
inline void write_reference(const std::filesystem::path& path, const Mesh& mesh, const ScalarField& ybar) {
  if (ybar.size() != mesh.node_count()) throw Error("write_reference: field size mismatch");
  auto mesh_path = path;
  mesh_path.replace_extension(".msh");
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  write_msh(mesh, mesh_path);
  nlohmann::json j;
  j["mesh"] = mesh_path.filename().string();
  j["values"] = std::vector<double>(ybar.values.data(), ybar.values.data() + ybar.values.size());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << "\n";
}

inline std::pair<Mesh, ScalarField> read_reference(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reference field " + path.string() + " (run gen-target first)");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("reference field " + path.string() + ": " + e.what());
  }
  if (!j.contains("mesh") || !j.contains("values")) throw IoError("reference field: missing 'mesh' or 'values'");
  Mesh mesh = read_msh(path.parent_path() / j["mesh"].get<std::string>());
  const auto values = j["values"].get<std::vector<double>>();
  if (values.size() != mesh.node_count()) throw IoError("reference field: value count does not match the mesh");
  ScalarField f(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) f.values[static_cast<Eigen::Index>(i)] = values[i];
  return {std::move(mesh), std::move(f)};
}

}  // namespace shapeflow
