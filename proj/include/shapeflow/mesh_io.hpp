#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "error.hpp"
#include "fields.hpp"
#include "log.hpp"
#include "mesh.hpp"

namespace shapeflow {

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }

  std::string expect(const std::string& what) {
    std::string line;
    if (!next(line)) throw ParseError("unexpected end of file, expected " + what, number_ + 1);
    return line;
  }

  std::size_t line() const { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Reads an ASCII Gmsh 2.2 mesh (sections $MeshFormat, $PhysicalNames,
/// $Nodes, $Elements; others skipped). Triangles carry the region given by
/// their physical tag; line elements whose physical name starts with
/// "interface" are chained into interface loops. The outer region is the one
/// named "out" or, failing that, the unique region touching the boundary.
inline Mesh read_msh(std::istream& in) {
  detail::LineReader rd(in);
  std::map<std::pair<int, int>, std::string> physical_names;  // (dim, tag) -> name
  std::vector<Vec2> nodes;
  std::unordered_map<long, int> node_index;
  struct RawTri {
    std::array<long, 3> v;
    int tag;
    std::size_t line;
  };
  std::vector<RawTri> raw_tris;
  std::vector<std::pair<std::array<long, 2>, int>> raw_lines;
  bool saw_format = false, saw_nodes = false, saw_elements = false;

  std::string line;
  while (rd.next(line)) {
    const std::string section = detail::trim(line);
    if (section.empty() || section[0] != '$') throw ParseError("expected a section header, got '" + section + "'", rd.line());
    const std::string end_tag = "$End" + section.substr(1);
    if (section == "$MeshFormat") {
      std::istringstream ss(rd.expect("format line"));
      double version = 0;
      int file_type = -1;
      if (!(ss >> version >> file_type)) throw ParseError("malformed $MeshFormat line", rd.line());
      if (version < 2.0 || version >= 3.0) throw ParseError("only Gmsh format 2.x is supported", rd.line());
      if (file_type != 0) throw ParseError("binary Gmsh files are not supported", rd.line());
      saw_format = true;
    } else if (section == "$PhysicalNames") {
      std::istringstream cs(rd.expect("physical name count"));
      long count = -1;
      if (!(cs >> count) || count < 0) throw ParseError("malformed physical name count", rd.line());
      for (long k = 0; k < count; ++k) {
        const std::string l = rd.expect("physical name");
        std::istringstream ss(l);
        int dim = 0, tag = 0;
        if (!(ss >> dim >> tag)) throw ParseError("malformed physical name entry", rd.line());
        std::string rest;
        std::getline(ss, rest);
        rest = detail::trim(rest);
        if (rest.size() < 2 || rest.front() != '"' || rest.back() != '"')
          throw ParseError("physical name must be quoted", rd.line());
        physical_names[{dim, tag}] = rest.substr(1, rest.size() - 2);
      }
    } else if (section == "$Nodes") {
      std::istringstream cs(rd.expect("node count"));
      long count = -1;
      if (!(cs >> count) || count < 0) throw ParseError("malformed node count", rd.line());
      nodes.reserve(static_cast<std::size_t>(count));
      for (long k = 0; k < count; ++k) {
        std::istringstream ss(rd.expect("node"));
        long id = 0;
        double x = 0, y = 0, z = 0;
        if (!(ss >> id >> x >> y >> z)) throw ParseError("malformed node line", rd.line());
        if (!node_index.emplace(id, static_cast<int>(nodes.size())).second)
          throw ParseError("duplicate node id " + std::to_string(id), rd.line());
        nodes.emplace_back(x, y);
      }
      saw_nodes = true;
    } else if (section == "$Elements") {
      std::istringstream cs(rd.expect("element count"));
      long count = -1;
      if (!(cs >> count) || count < 0) throw ParseError("malformed element count", rd.line());
      for (long k = 0; k < count; ++k) {
        std::istringstream ss(rd.expect("element"));
        long id = 0;
        int type = 0, ntags = 0;
        if (!(ss >> id >> type >> ntags) || ntags < 0) throw ParseError("malformed element line", rd.line());
        std::vector<int> tags(static_cast<std::size_t>(ntags));
        for (auto& t : tags)
          if (!(ss >> t)) throw ParseError("missing element tag", rd.line());
        const int physical = tags.empty() ? 0 : tags[0];
        if (type == 2) {
          RawTri t{{0, 0, 0}, physical, rd.line()};
          for (auto& v : t.v)
            if (!(ss >> v)) throw ParseError("missing triangle node", rd.line());
          raw_tris.push_back(t);
        } else if (type == 1) {
          std::array<long, 2> e{};
          for (auto& v : e)
            if (!(ss >> v)) throw ParseError("missing line node", rd.line());
          raw_lines.emplace_back(e, physical);
        } else if (type != 15) {
          throw ParseError("unsupported element type " + std::to_string(type), rd.line());
        }
      }
      saw_elements = true;
    } else {
      // Unknown section: skip to its end marker.
      bool closed = false;
      while (rd.next(line))
        if (detail::trim(line) == end_tag) {
          closed = true;
          break;
        }
      if (!closed) throw ParseError("unterminated section " + section, rd.line());
      continue;
    }
    const std::string closing = detail::trim(rd.expect(end_tag));
    if (closing != end_tag) throw ParseError("expected " + end_tag + ", got '" + closing + "'", rd.line());
  }
  if (!saw_format) throw ParseError("missing $MeshFormat section", rd.line());
  if (!saw_nodes) throw ParseError("missing $Nodes section", rd.line());
  if (!saw_elements) throw ParseError("missing $Elements section", rd.line());
  if (raw_tris.empty()) throw ParseError("mesh contains no triangles", rd.line());

  auto lookup = [&](long id, std::size_t at) {
    const auto it = node_index.find(id);
    if (it == node_index.end()) throw ParseError("element references unknown node " + std::to_string(id), at);
    return it->second;
  };

  // Region names in order of first appearance of their physical tag.
  std::vector<std::string> region_names;
  std::unordered_map<int, int> tag_region;
  std::vector<Triangle> tris;
  std::vector<int> labels;
  for (const auto& rt : raw_tris) {
    auto it = tag_region.find(rt.tag);
    if (it == tag_region.end()) {
      const auto pn = physical_names.find({2, rt.tag});
      region_names.push_back(pn != physical_names.end() ? pn->second : std::to_string(rt.tag));
      it = tag_region.emplace(rt.tag, static_cast<int>(region_names.size()) - 1).first;
    }
    Triangle t{lookup(rt.v[0], rt.line), lookup(rt.v[1], rt.line), lookup(rt.v[2], rt.line)};
    const double a = triangle_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
    if (a < 0) std::swap(t[1], t[2]);
    else if (!(a > 0)) throw TopologyError("triangle at line " + std::to_string(rt.line) + " has zero area");
    tris.push_back(t);
    labels.push_back(it->second);
  }

  std::vector<Edge> interface_edges;
  for (const auto& [e, tag] : raw_lines) {
    const auto pn = physical_names.find({1, tag});
    if (pn != physical_names.end() && pn->second.rfind("interface", 0) == 0)
      interface_edges.push_back({lookup(e[0], 0), lookup(e[1], 0)});
  }

  int outer = -1;
  if (auto it = std::find(region_names.begin(), region_names.end(), "out"); it != region_names.end()) {
    outer = static_cast<int>(it - region_names.begin());
  } else {
    std::unordered_map<std::uint64_t, int> edge_count;
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e) ++edge_count[detail::edge_key(t[e], t[(e + 1) % 3])];
    for (std::size_t k = 0; k < tris.size(); ++k)
      for (int e = 0; e < 3; ++e)
        if (edge_count[detail::edge_key(tris[k][e], tris[k][(e + 1) % 3])] == 1) {
          if (outer >= 0 && outer != labels[k])
            throw TopologyError("more than one region touches the outer boundary");
          outer = labels[k];
        }
    if (outer < 0) throw TopologyError("could not identify the outer region");
  }

  return Mesh(std::move(nodes), std::move(tris), std::move(labels), std::move(region_names), outer,
              chain_loops(interface_edges));
}

inline Mesh read_msh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_msh(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

/// Writes the mesh in ASCII Gmsh 2.2 with full double precision.
inline void write_msh(const Mesh& mesh, std::ostream& out) {
  constexpr int boundary_tag = 1000;
  constexpr int interface_tag = 2000;
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  out << "$PhysicalNames\n" << mesh.region_names().size() + 1 + mesh.loops().size() << '\n';
  out << "1 " << boundary_tag << " \"boundary\"\n";
  for (std::size_t k = 0; k < mesh.loops().size(); ++k)
    out << "1 " << interface_tag + k << " \"interface_" << k << "\"\n";
  for (std::size_t r = 0; r < mesh.region_names().size(); ++r)
    out << "2 " << r + 1 << " \"" << mesh.region_names()[r] << "\"\n";
  out << "$EndPhysicalNames\n";
  out << "$Nodes\n" << mesh.node_count() << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.node_count(); ++i)
    out << i + 1 << ' ' << mesh.node(i).x() << ' ' << mesh.node(i).y() << " 0\n";
  out << "$EndNodes\n";
  std::size_t loop_edges = 0;
  for (const auto& l : mesh.loops()) loop_edges += l.nodes.size();
  out << "$Elements\n" << mesh.boundary_edges().size() + loop_edges + mesh.triangle_count() << '\n';
  std::size_t id = 1;
  for (const auto& e : mesh.boundary_edges())
    out << id++ << " 1 2 " << boundary_tag << ' ' << boundary_tag << ' ' << e[0] + 1 << ' ' << e[1] + 1 << '\n';
  for (std::size_t k = 0; k < mesh.loops().size(); ++k) {
    const auto& n = mesh.loops()[k].nodes;
    for (std::size_t i = 0; i < n.size(); ++i)
      out << id++ << " 1 2 " << interface_tag + k << ' ' << interface_tag + k << ' ' << n[i] + 1 << ' '
          << n[(i + 1) % n.size()] + 1 << '\n';
  }
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const int tag = mesh.region(t) + 1;
    out << id++ << " 2 2 " << tag << ' ' << tag << ' ' << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1
        << '\n';
  }
  out << "$EndElements\n";
}

inline void write_msh(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_msh(mesh, out);
  if (!out) throw IoError("write failed: " + path.string());
}

using NamedField = std::pair<std::string, std::variant<ScalarField, VectorField>>;

/// Legacy ASCII VTK unstructured grid with one POINT_DATA array per field (in
/// the given order) and the triangle region index as CELL_DATA.
inline void write_vtk(const Mesh& mesh, const std::vector<NamedField>& fields, std::ostream& out) {
  const auto nv = mesh.node_count();
  const auto nt = mesh.triangle_count();
  out << "# vtk DataFile Version 3.0\nshapeflow\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << std::setprecision(17);
  out << "POINTS " << nv << " double\n";
  for (const auto& p : mesh.nodes()) out << p.x() << ' ' << p.y() << " 0\n";
  out << "CELLS " << nt << ' ' << 4 * nt << '\n';
  for (const auto& t : mesh.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << nt << '\n';
  for (std::size_t t = 0; t < nt; ++t) out << "5\n";
  out << "CELL_DATA " << nt << "\nSCALARS region int 1\nLOOKUP_TABLE default\n";
  for (std::size_t t = 0; t < nt; ++t) out << mesh.region(t) << '\n';
  if (!fields.empty()) out << "POINT_DATA " << nv << '\n';
  for (const auto& [name, field] : fields) {
    if (const auto* s = std::get_if<ScalarField>(&field)) {
      if (s->size() != nv) throw Error("write_vtk: field '" + name + "' has wrong length");
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (std::size_t i = 0; i < nv; ++i) out << (*s)[i] << '\n';
    } else {
      const auto& v = std::get<VectorField>(field);
      if (v.node_count() != nv) throw Error("write_vtk: field '" + name + "' has wrong length");
      out << "VECTORS " << name << " double\n";
      for (std::size_t i = 0; i < nv; ++i) out << v.at(i).x() << ' ' << v.at(i).y() << " 0\n";
    }
  }
}

inline void write_vtk(const Mesh& mesh, const std::vector<NamedField>& fields, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_vtk(mesh, fields, out);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace shapeflow
