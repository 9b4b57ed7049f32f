#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "fields.hpp"
#include "geometry.hpp"

namespace shapeflow {

using Triangle = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Closed interface polyline. Nodes are ordered counter-clockwise around the
/// enclosed region, so the inner region lies to the left of every segment and
/// the outward normal (inner to outer) is the tangent rotated clockwise.
struct InterfaceLoop {
  std::vector<int> nodes;
  int inner_region = -1;
};

struct MeshQualityReport {
  double min_area = 0.0;          ///< smallest signed triangle area
  double min_angle = 0.0;         ///< radians
  double max_aspect_ratio = 0.0;  ///< circumradius / (2 * inradius); 1 for equilateral
  std::size_t inverted_count = 0;
  double min_interface_segment = 0.0;

  /// Default floor on the minimum angle: one degree.
  static constexpr double default_min_angle = std::numbers::pi / 180.0;

  bool valid(double min_angle_floor = default_min_angle) const {
    return inverted_count == 0 && min_angle > min_angle_floor;
  }
};

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace detail

/// Connectivity shared by every mesh obtained from the same construction
/// through node displacement.
struct MeshTopology {
  std::vector<Triangle> triangles;
  std::vector<int> triangle_region;
  std::vector<std::string> region_names;
  int outer_region = 0;
  std::vector<Edge> boundary_edges;  ///< oriented with the domain on the left
  std::vector<InterfaceLoop> loops;

  std::vector<char> is_boundary_node;
  std::vector<char> is_interface_node;
  std::vector<std::vector<int>> node_neighbors;
  /// Triangles adjacent to each edge, keyed by detail::edge_key.
  std::unordered_map<std::uint64_t, std::array<int, 2>> edge_triangles;
};

/// Interface-fitted triangulation of a planar hold-all domain.
///
/// Immutable once constructed; displaced meshes share the topology of their
/// parent and only own new node coordinates.
class Mesh {
 public:
  Mesh() = default;

  /// Builds and validates a mesh. Triangles must be counter-clockwise. Loops
  /// may be given in either orientation and with inner_region unset; both are
  /// derived from the triangle labels.
  Mesh(std::vector<Vec2> nodes, std::vector<Triangle> triangles, std::vector<int> triangle_region,
       std::vector<std::string> region_names, int outer_region, std::vector<InterfaceLoop> loops)
      : nodes_(std::move(nodes)) {
    auto topo = std::make_shared<MeshTopology>();
    topo->triangles = std::move(triangles);
    topo->triangle_region = std::move(triangle_region);
    topo->region_names = std::move(region_names);
    topo->outer_region = outer_region;
    topo->loops = std::move(loops);
    build_topology(*topo);
    topology_ = std::move(topo);
  }

  /// Same connectivity, new coordinates. No validity check is performed.
  Mesh with_nodes(std::vector<Vec2> nodes) const {
    if (nodes.size() != nodes_.size()) throw Error("with_nodes: node count mismatch");
    Mesh m;
    m.nodes_ = std::move(nodes);
    m.topology_ = topology_;
    return m;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t triangle_count() const { return topo().triangles.size(); }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  const Vec2& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<Triangle>& triangles() const { return topo().triangles; }
  const Triangle& triangle(std::size_t t) const { return topo().triangles[t]; }
  int region(std::size_t t) const { return topo().triangle_region[t]; }
  const std::vector<int>& triangle_regions() const { return topo().triangle_region; }
  const std::vector<std::string>& region_names() const { return topo().region_names; }
  const std::string& region_name(std::size_t t) const { return topo().region_names[region(t)]; }
  int outer_region() const { return topo().outer_region; }
  const std::vector<Edge>& boundary_edges() const { return topo().boundary_edges; }
  const std::vector<InterfaceLoop>& loops() const { return topo().loops; }
  bool is_boundary_node(std::size_t i) const { return topo().is_boundary_node[i] != 0; }
  bool is_interface_node(std::size_t i) const { return topo().is_interface_node[i] != 0; }
  const std::vector<std::vector<int>>& node_neighbors() const { return topo().node_neighbors; }
  const MeshTopology& topology() const { return topo(); }
  bool shares_topology_with(const Mesh& other) const { return topology_ == other.topology_; }

  double signed_area(std::size_t t) const {
    const auto& tri = triangle(t);
    return triangle_area(nodes_[tri[0]], nodes_[tri[1]], nodes_[tri[2]]);
  }

  double total_area() const {
    double s = 0.0;
    for (std::size_t t = 0; t < triangle_count(); ++t) s += signed_area(t);
    return s;
  }

  std::vector<Vec2> loop_points(std::size_t k) const {
    std::vector<Vec2> pts;
    pts.reserve(loops()[k].nodes.size());
    for (int i : loops()[k].nodes) pts.push_back(nodes_[i]);
    return pts;
  }

  /// Sum of interface segment lengths over all loops.
  double interface_length() const {
    double s = 0.0;
    for (std::size_t k = 0; k < loops().size(); ++k) s += polygon_perimeter(loop_points(k));
    return s;
  }

  /// Outward unit normals (inner to outer region) of the segments of loop k.
  std::vector<Vec2> loop_normals(std::size_t k) const {
    const auto pts = loop_points(k);
    std::vector<Vec2> n;
    n.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec2 tau = (pts[(i + 1) % pts.size()] - pts[i]).normalized();
      n.emplace_back(tau.y(), -tau.x());
    }
    return n;
  }

  /// Number of connected components of each non-outer region.
  std::size_t inner_component_count() const {
    const auto& t = topo();
    std::vector<int> comp(triangle_count(), -1);
    std::size_t count = 0;
    for (std::size_t s = 0; s < triangle_count(); ++s) {
      if (t.triangle_region[s] == t.outer_region || comp[s] >= 0) continue;
      std::queue<std::size_t> q;
      q.push(s);
      comp[s] = static_cast<int>(count);
      while (!q.empty()) {
        const auto c = q.front();
        q.pop();
        for (int e = 0; e < 3; ++e) {
          const auto& adj =
              t.edge_triangles.at(detail::edge_key(t.triangles[c][e], t.triangles[c][(e + 1) % 3]));
          for (int nb : adj) {
            if (nb < 0 || comp[nb] >= 0 || t.triangle_region[nb] != t.triangle_region[c]) continue;
            comp[nb] = static_cast<int>(count);
            q.push(static_cast<std::size_t>(nb));
          }
        }
      }
      ++count;
    }
    return count;
  }

  /// Full geometric check of the current coordinates: positive areas and
  /// simple, pairwise disjoint loops. Throws TopologyError on failure.
  void validate_geometry() const {
    for (std::size_t t = 0; t < triangle_count(); ++t)
      if (!(signed_area(t) > 0.0))
        throw TopologyError("triangle " + std::to_string(t) + " has non-positive area");
    for (std::size_t k = 0; k < loops().size(); ++k)
      if (!polygon_is_simple(loop_points(k)))
        throw TopologyError("interface loop " + std::to_string(k) + " is not simple");
    for (std::size_t a = 0; a < loops().size(); ++a)
      for (std::size_t b = a + 1; b < loops().size(); ++b)
        if (polygon_distance(loop_points(a), loop_points(b)) == 0.0)
          throw TopologyError("interface loops " + std::to_string(a) + " and " + std::to_string(b) +
                              " intersect");
  }

 private:
  const MeshTopology& topo() const {
    if (!topology_) throw Error("empty mesh");
    return *topology_;
  }

  void build_topology(MeshTopology& t) const {
    const auto nv = static_cast<int>(nodes_.size());
    const auto nt = t.triangles.size();
    if (t.triangle_region.size() != nt) throw Error("triangle label count mismatch");
    if (t.outer_region < 0 || t.outer_region >= static_cast<int>(t.region_names.size()))
      throw Error("outer region index out of range");

    for (std::size_t k = 0; k < nt; ++k) {
      const auto& tri = t.triangles[k];
      for (int v : tri)
        if (v < 0 || v >= nv) throw TopologyError("triangle " + std::to_string(k) + " references missing node");
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        throw TopologyError("triangle " + std::to_string(k) + " is degenerate");
      if (t.triangle_region[k] < 0 || t.triangle_region[k] >= static_cast<int>(t.region_names.size()))
        throw Error("triangle region out of range");
      if (!(triangle_area(nodes_[tri[0]], nodes_[tri[1]], nodes_[tri[2]]) > 0.0))
        throw TopologyError("triangle " + std::to_string(k) + " is not counter-clockwise");
    }

    t.edge_triangles.clear();
    t.edge_triangles.reserve(3 * nt);
    for (std::size_t k = 0; k < nt; ++k) {
      const auto& tri = t.triangles[k];
      for (int e = 0; e < 3; ++e) {
        auto [it, inserted] =
            t.edge_triangles.try_emplace(detail::edge_key(tri[e], tri[(e + 1) % 3]), std::array<int, 2>{-1, -1});
        auto& slot = it->second;
        if (slot[0] < 0) slot[0] = static_cast<int>(k);
        else if (slot[1] < 0) slot[1] = static_cast<int>(k);
        else throw TopologyError("edge shared by more than two triangles");
      }
    }

    t.is_boundary_node.assign(nodes_.size(), 0);
    t.is_interface_node.assign(nodes_.size(), 0);
    t.node_neighbors.assign(nodes_.size(), {});
    t.boundary_edges.clear();
    for (std::size_t k = 0; k < nt; ++k) {
      const auto& tri = t.triangles[k];
      for (int e = 0; e < 3; ++e) {
        const int a = tri[e], b = tri[(e + 1) % 3];
        t.node_neighbors[a].push_back(b);
        t.node_neighbors[b].push_back(a);
        if (t.edge_triangles.at(detail::edge_key(a, b))[1] < 0) {
          t.boundary_edges.push_back({a, b});
          t.is_boundary_node[a] = t.is_boundary_node[b] = 1;
        }
      }
    }
    for (auto& nb : t.node_neighbors) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }

    for (std::size_t l = 0; l < t.loops.size(); ++l) {
      auto& loop = t.loops[l];
      const auto n = loop.nodes.size();
      const std::string tag = "interface loop " + std::to_string(l);
      if (n < 3) throw TopologyError(tag + " has fewer than three nodes");
      int inner = -1;
      bool reverse = false;
      for (std::size_t i = 0; i < n; ++i) {
        const int a = loop.nodes[i], b = loop.nodes[(i + 1) % n];
        if (a < 0 || a >= nv) throw TopologyError(tag + " references missing node");
        if (t.is_interface_node[a]) throw TopologyError(tag + " revisits a node or touches another loop");
        t.is_interface_node[a] = 1;
        const auto it = t.edge_triangles.find(detail::edge_key(a, b));
        if (it == t.edge_triangles.end()) throw TopologyError(tag + " segment is not a mesh edge");
        const auto [t0, t1] = it->second;
        if (t1 < 0) throw TopologyError(tag + " runs along the outer boundary");
        const int r0 = t.triangle_region[t0], r1 = t.triangle_region[t1];
        if ((r0 == t.outer_region) == (r1 == t.outer_region))
          throw TopologyError(tag + " edge does not separate an inner region from the outer region");
        const int in_tri = (r0 == t.outer_region) ? t1 : t0;
        const int r_in = t.triangle_region[in_tri];
        if (inner >= 0 && inner != r_in) throw TopologyError(tag + " encloses more than one region");
        inner = r_in;
        // The inner triangle contains the directed edge a->b iff it lies on its left.
        const auto& tri = t.triangles[in_tri];
        bool left = false;
        for (int e = 0; e < 3; ++e)
          if (tri[e] == a && tri[(e + 1) % 3] == b) left = true;
        if (i == 0) reverse = !left;
        else if (reverse == left) throw TopologyError(tag + " has inconsistent orientation");
      }
      if (loop.inner_region >= 0 && loop.inner_region != inner)
        throw TopologyError(tag + " inner region label disagrees with triangles");
      loop.inner_region = inner;
      if (reverse) std::reverse(loop.nodes.begin(), loop.nodes.end());
      for (int v : loop.nodes)
        if (t.is_boundary_node[v]) throw TopologyError(tag + " touches the outer boundary");
    }

    // Every edge between an inner and the outer region must belong to a loop.
    std::size_t separating = 0, loop_edges = 0;
    for (const auto& [key, tris] : t.edge_triangles) {
      if (tris[1] < 0) continue;
      const int r0 = t.triangle_region[tris[0]], r1 = t.triangle_region[tris[1]];
      if (r0 != r1) {
        if (r0 != t.outer_region && r1 != t.outer_region)
          throw TopologyError("two inner regions touch without the outer region between them");
        ++separating;
      }
    }
    for (const auto& loop : t.loops) loop_edges += loop.nodes.size();
    if (separating != loop_edges)
      throw TopologyError("region labels and interface loops disagree (" + std::to_string(separating) +
                          " separating edges, " + std::to_string(loop_edges) + " loop edges)");
  }

  std::vector<Vec2> nodes_;
  std::shared_ptr<const MeshTopology> topology_;
};

/// Chains an unordered set of interface edges into closed loops.
/// Throws TopologyError for open or branching chains.
inline std::vector<InterfaceLoop> chain_loops(const std::vector<Edge>& edges) {
  std::unordered_map<int, std::vector<int>> adj;
  for (const auto& e : edges) {
    if (e[0] == e[1]) throw TopologyError("interface edge with identical end nodes");
    adj[e[0]].push_back(e[1]);
    adj[e[1]].push_back(e[0]);
  }
  for (const auto& [v, nb] : adj)
    if (nb.size() != 2)
      throw TopologyError("interface chain is open or branching at node " + std::to_string(v) +
                          " (degree " + std::to_string(nb.size()) + ")");
  std::vector<int> order;
  order.reserve(adj.size());
  for (const auto& [v, nb] : adj) order.push_back(v);
  std::sort(order.begin(), order.end());

  std::unordered_map<int, char> seen;
  std::vector<InterfaceLoop> loops;
  for (int start : order) {
    if (seen[start]) continue;
    InterfaceLoop loop;
    int prev = -1, cur = start;
    while (true) {
      loop.nodes.push_back(cur);
      seen[cur] = 1;
      const auto& nb = adj[cur];
      int next = (nb[0] != prev) ? nb[0] : nb[1];
      if (prev < 0) next = std::min(nb[0], nb[1]);
      prev = cur;
      cur = next;
      if (cur == start) break;
      if (seen[cur]) throw TopologyError("interface chain is not a simple cycle");
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

/// Moves every node by t * V(x). Connectivity, labels and loops are kept.
inline Mesh apply_displacement(const Mesh& mesh, const VectorField& v, double t) {
  if (v.node_count() != mesh.node_count()) throw Error("apply_displacement: field size mismatch");
  std::vector<Vec2> nodes = mesh.nodes();
  if (t != 0.0)
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] += t * v.at(i);
  return mesh.with_nodes(std::move(nodes));
}

inline MeshQualityReport mesh_quality(const Mesh& mesh) {
  MeshQualityReport r;
  r.min_area = INFINITY;
  r.min_angle = INFINITY;
  r.max_aspect_ratio = 0.0;
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangle(t);
    const Vec2& a = mesh.node(tri[0]);
    const Vec2& b = mesh.node(tri[1]);
    const Vec2& c = mesh.node(tri[2]);
    const double area = triangle_area(a, b, c);
    r.min_area = std::min(r.min_area, area);
    if (!(area > 0.0)) {
      ++r.inverted_count;
      r.min_angle = std::min(r.min_angle, 0.0);
      r.max_aspect_ratio = INFINITY;
      continue;
    }
    const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
    const double angles[3] = {std::acos(std::clamp((b - a).normalized().dot((c - a).normalized()), -1.0, 1.0)),
                              std::acos(std::clamp((a - b).normalized().dot((c - b).normalized()), -1.0, 1.0)),
                              std::acos(std::clamp((a - c).normalized().dot((b - c).normalized()), -1.0, 1.0))};
    r.min_angle = std::min({r.min_angle, angles[0], angles[1], angles[2]});
    const double s = 0.5 * (la + lb + lc);
    const double inradius = area / s;
    const double circumradius = la * lb * lc / (4.0 * area);
    r.max_aspect_ratio = std::max(r.max_aspect_ratio, circumradius / (2.0 * inradius));
  }
  r.min_interface_segment = INFINITY;
  for (std::size_t k = 0; k < mesh.loops().size(); ++k) {
    const auto pts = mesh.loop_points(k);
    for (std::size_t i = 0; i < pts.size(); ++i)
      r.min_interface_segment = std::min(r.min_interface_segment, (pts[(i + 1) % pts.size()] - pts[i]).norm());
  }
  if (mesh.loops().empty()) r.min_interface_segment = 0.0;
  return r;
}

/// Splits every triangle into four through edge midpoints. Interface loops
/// gain their segment midpoints, so straight-sided geometry is preserved
/// exactly and curved geometry keeps its polygonal approximation.
inline Mesh refine_uniform(const Mesh& mesh) {
  std::vector<Vec2> nodes = mesh.nodes();
  std::unordered_map<std::uint64_t, int> midpoint;
  auto mid = [&](int a, int b) {
    const auto key = detail::edge_key(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(0.5 * (mesh.node(a) + mesh.node(b)));
    midpoint.emplace(key, id);
    return id;
  };
  std::vector<Triangle> tris;
  std::vector<int> regions;
  tris.reserve(4 * mesh.triangle_count());
  regions.reserve(4 * mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto [a, b, c] = mesh.triangle(t);
    const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
    for (const Triangle& s : {Triangle{a, ab, ca}, Triangle{ab, b, bc}, Triangle{ca, bc, c}, Triangle{ab, bc, ca}}) {
      tris.push_back(s);
      regions.push_back(mesh.region(t));
    }
  }
  std::vector<InterfaceLoop> loops;
  for (const auto& loop : mesh.loops()) {
    InterfaceLoop r;
    r.inner_region = loop.inner_region;
    for (std::size_t i = 0; i < loop.nodes.size(); ++i) {
      r.nodes.push_back(loop.nodes[i]);
      r.nodes.push_back(mid(loop.nodes[i], loop.nodes[(i + 1) % loop.nodes.size()]));
    }
    loops.push_back(std::move(r));
  }
  return Mesh(std::move(nodes), std::move(tris), std::move(regions), mesh.region_names(), mesh.outer_region(),
              std::move(loops));
}

}  // namespace shapeflow
