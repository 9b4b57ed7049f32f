#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"
#include "mesh.hpp"

namespace shapeflow {

struct RectangleDomain {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
};

/// Axis-aligned ellipse with semi-axes a (x) and b (y).
struct EllipseDomain {
  double a = 1.0, b = 1.0;
  Vec2 center = Vec2::Zero();
};

using OuterDomain = std::variant<RectangleDomain, EllipseDomain>;

struct CircleLoop {
  Vec2 center = Vec2::Zero();
  double radius = 0.1;
  int segments = 0;  ///< 0 selects ceil(perimeter / h)
};

struct EllipseLoop {
  Vec2 center = Vec2::Zero();
  double a = 0.1, b = 0.1;
  double angle = 0.0;  ///< rotation in radians
  int segments = 0;
};

struct PolylineLoop {
  std::vector<Vec2> points;
};

struct LoopSpec {
  std::variant<CircleLoop, EllipseLoop, PolylineLoop> shape;
  std::string region = "in";
};

struct GeneratorOptions {
  std::string outer_region = "out";
  int smoothing_passes = 5;
  /// Lattice points closer than this multiple of h to a boundary or interface
  /// polyline are discarded.
  double clearance = 0.6;
};

namespace detail {

/// Samples a closed parametric curve at n points equally spaced in arc length.
template <class Curve>
std::vector<Vec2> sample_by_arclength(Curve&& curve, std::size_t n) {
  constexpr std::size_t fine = 4096;
  std::vector<double> cum(fine + 1, 0.0);
  Vec2 prev = curve(0.0);
  for (std::size_t i = 1; i <= fine; ++i) {
    const Vec2 p = curve(2.0 * std::numbers::pi * static_cast<double>(i) / fine);
    cum[i] = cum[i - 1] + (p - prev).norm();
    prev = p;
  }
  std::vector<Vec2> pts;
  pts.reserve(n);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = cum[fine] * static_cast<double>(k) / static_cast<double>(n);
    while (j + 1 < fine && cum[j + 1] < target) ++j;
    const double w = (cum[j + 1] > cum[j]) ? (target - cum[j]) / (cum[j + 1] - cum[j]) : 0.0;
    pts.push_back(curve(2.0 * std::numbers::pi * (static_cast<double>(j) + w) / fine));
  }
  return pts;
}

inline double ellipse_perimeter(double a, double b) {
  const double h = (a - b) * (a - b) / ((a + b) * (a + b));
  return std::numbers::pi * (a + b) * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
}

inline std::size_t segment_count(double perimeter, double h, int requested) {
  if (requested > 0) return static_cast<std::size_t>(requested);
  return std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(perimeter / h - 1e-9)));
}

inline std::vector<Vec2> outer_polygon(const OuterDomain& outer, double h) {
  std::vector<Vec2> pts;
  if (const auto* r = std::get_if<RectangleDomain>(&outer)) {
    if (!(r->x1 > r->x0 && r->y1 > r->y0)) throw GeometryError("rectangle must have positive extent");
    const Vec2 corners[4] = {{r->x0, r->y0}, {r->x1, r->y0}, {r->x1, r->y1}, {r->x0, r->y1}};
    for (int s = 0; s < 4; ++s) {
      const Vec2& a = corners[s];
      const Vec2& b = corners[(s + 1) % 4];
      const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((b - a).norm() / h - 1e-9)));
      for (std::size_t k = 0; k < n; ++k) {
        const double w = static_cast<double>(k) / static_cast<double>(n);
        // Keep straight sides exactly straight.
        Vec2 p = (1.0 - w) * a + w * b;
        if (s % 2 == 0) p.y() = a.y();
        else p.x() = a.x();
        pts.push_back(p);
      }
    }
  } else {
    const auto& e = std::get<EllipseDomain>(outer);
    if (!(e.a > 0 && e.b > 0)) throw GeometryError("ellipse semi-axes must be positive");
    const auto n = segment_count(ellipse_perimeter(e.a, e.b), h, 0);
    pts = sample_by_arclength(
        [&](double t) { return Vec2(e.center.x() + e.a * std::cos(t), e.center.y() + e.b * std::sin(t)); }, n);
  }
  return pts;
}

inline std::vector<Vec2> loop_polygon(const LoopSpec& spec, double h) {
  std::vector<Vec2> pts;
  if (const auto* c = std::get_if<CircleLoop>(&spec.shape)) {
    if (!(c->radius > 0)) throw GeometryError("circle radius must be positive");
    const auto n = segment_count(2.0 * std::numbers::pi * c->radius, h, c->segments);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      pts.emplace_back(c->center.x() + c->radius * std::cos(t), c->center.y() + c->radius * std::sin(t));
    }
  } else if (const auto* e = std::get_if<EllipseLoop>(&spec.shape)) {
    if (!(e->a > 0 && e->b > 0)) throw GeometryError("ellipse semi-axes must be positive");
    const auto n = segment_count(ellipse_perimeter(e->a, e->b), h, e->segments);
    const double ca = std::cos(e->angle), sa = std::sin(e->angle);
    pts = sample_by_arclength(
        [&](double t) {
          const double x = e->a * std::cos(t), y = e->b * std::sin(t);
          return Vec2(e->center.x() + ca * x - sa * y, e->center.y() + sa * x + ca * y);
        },
        n);
  } else {
    pts = std::get<PolylineLoop>(spec.shape).points;
    if (pts.size() < 3) throw GeometryError("polyline loop needs at least three points");
  }
  if (!polygon_is_simple(pts)) throw GeometryError("loop polygon is not simple");
  if (polygon_signed_area(pts) < 0) std::reverse(pts.begin(), pts.end());
  return pts;
}

/// Incremental Bowyer-Watson Delaunay triangulation with adjacency walking.
class Delaunay {
 public:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nb;  ///< nb[e] is across edge (v[e], v[e+1])
    bool alive = true;
  };

  explicit Delaunay(const std::vector<Vec2>& pts) : pts_(pts) {
    Vec2 lo = pts_.front(), hi = pts_.front();
    for (const auto& p : pts_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec2 c = 0.5 * (lo + hi);
    const double d = std::max((hi - lo).maxCoeff(), 1e-12) * 50.0;
    super_ = static_cast<int>(pts_.size());
    pts_.emplace_back(c.x() - 2 * d, c.y() - d);
    pts_.emplace_back(c.x() + 2 * d, c.y() - d);
    pts_.emplace_back(c.x(), c.y() + 2 * d);
    tris_.push_back({{super_, super_ + 1, super_ + 2}, {-1, -1, -1}, true});
  }

  void insert(int p) {
    const int start = locate(pts_[p]);
    // Cavity: connected set of triangles whose circumcircle contains p.
    std::vector<int> cavity{start};
    std::unordered_set<int> in_cavity{start};
    for (std::size_t i = 0; i < cavity.size(); ++i) {
      for (int nb : tris_[cavity[i]].nb) {
        if (nb < 0 || in_cavity.count(nb)) continue;
        if (in_circle(nb, pts_[p]) > 0.0) {
          in_cavity.insert(nb);
          cavity.push_back(nb);
        }
      }
    }
    // Enforce star-shapedness with respect to p.
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t i = 0; i < cavity.size() && !changed; ++i) {
        const auto& t = tris_[cavity[i]];
        for (int e = 0; e < 3; ++e) {
          const int nb = t.nb[e];
          if (nb >= 0 && in_cavity.count(nb)) continue;
          if (orient2d(pts_[t.v[e]], pts_[t.v[(e + 1) % 3]], pts_[p]) <= 0.0 && nb >= 0) {
            in_cavity.insert(nb);
            cavity.push_back(nb);
            changed = true;
            break;
          }
        }
      }
    }
    struct BoundaryEdge {
      int a, b, outside;
    };
    std::vector<BoundaryEdge> boundary;
    for (int c : cavity) {
      const auto& t = tris_[c];
      for (int e = 0; e < 3; ++e)
        if (t.nb[e] < 0 || !in_cavity.count(t.nb[e])) boundary.push_back({t.v[e], t.v[(e + 1) % 3], t.nb[e]});
    }
    for (int c : cavity) {
      tris_[c].alive = false;
      free_.push_back(c);
    }
    std::unordered_map<int, int> by_start;  // new triangle index keyed by its edge start vertex a
    std::vector<int> created;
    for (const auto& be : boundary) {
      int id;
      if (!free_.empty()) {
        id = free_.back();
        free_.pop_back();
        tris_[id] = {{be.a, be.b, p}, {be.outside, -1, -1}, true};
      } else {
        id = static_cast<int>(tris_.size());
        tris_.push_back({{be.a, be.b, p}, {be.outside, -1, -1}, true});
      }
      created.push_back(id);
      by_start[be.a] = id;
      if (be.outside >= 0) {
        auto& o = tris_[be.outside];
        for (int e = 0; e < 3; ++e)
          if (o.v[e] == be.b && o.v[(e + 1) % 3] == be.a) o.nb[e] = id;
      }
    }
    for (int id : created) {
      auto& t = tris_[id];
      // edge (b, p) neighbours the triangle starting at b; edge (p, a) the one ending at a.
      t.nb[1] = by_start.at(t.v[1]);
      tris_[t.nb[1]].nb[2] = id;
    }
    last_ = created.front();
  }

  /// Triangles not touching the bounding super-triangle.
  std::vector<std::array<int, 3>> triangles() const {
    std::vector<std::array<int, 3>> out;
    for (const auto& t : tris_) {
      if (!t.alive) continue;
      if (t.v[0] >= super_ || t.v[1] >= super_ || t.v[2] >= super_) continue;
      out.push_back(t.v);
    }
    return out;
  }

 private:
  double in_circle(int t, const Vec2& d) const {
    const Vec2& a = pts_[tris_[t].v[0]];
    const Vec2& b = pts_[tris_[t].v[1]];
    const Vec2& c = pts_[tris_[t].v[2]];
    const double adx = a.x() - d.x(), ady = a.y() - d.y();
    const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
    const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
    const double ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
    return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
  }

  bool contains(int t, const Vec2& p) const {
    const auto& v = tris_[t].v;
    return orient2d(pts_[v[0]], pts_[v[1]], p) >= 0 && orient2d(pts_[v[1]], pts_[v[2]], p) >= 0 &&
           orient2d(pts_[v[2]], pts_[v[0]], p) >= 0;
  }

  int locate(const Vec2& p) const {
    int t = (last_ >= 0 && tris_[last_].alive) ? last_ : 0;
    while (!tris_[t].alive) ++t;
    for (std::size_t steps = 0; steps < 4 * tris_.size() + 16; ++steps) {
      const auto& tri = tris_[t];
      int next = -1;
      for (int e = 0; e < 3; ++e) {
        if (orient2d(pts_[tri.v[e]], pts_[tri.v[(e + 1) % 3]], p) < 0.0) {
          next = tri.nb[e];
          break;
        }
      }
      if (next < 0) return t;
      t = next;
    }
    for (std::size_t k = 0; k < tris_.size(); ++k)
      if (tris_[k].alive && contains(static_cast<int>(k), p)) return static_cast<int>(k);
    throw GenerationError("point location failed during triangulation");
  }

  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  int super_ = 0;
  int last_ = -1;
};

}  // namespace detail

/// Generates an interface-fitted triangulation of `outer` whose interface loops
/// interpolate the requested polygons exactly.
///
/// Points: the outer polygon and each loop polygon at spacing h, plus a
/// triangular lattice of spacing h that keeps clear of every polyline. The
/// Delaunay triangulation of this point set contains each polygon segment as
/// an edge (checked); triangles are labelled by centroid containment and free
/// nodes get a few passes of Laplacian smoothing.
inline Mesh generate_fitted_mesh(const OuterDomain& outer, const std::vector<LoopSpec>& loop_specs, double h,
                                 const GeneratorOptions& opt = {}) {
  if (!(h > 0.0)) throw GeometryError("mesh size h must be positive");
  const std::vector<Vec2> boundary = detail::outer_polygon(outer, h);
  std::vector<std::vector<Vec2>> loops;
  for (const auto& spec : loop_specs) loops.push_back(detail::loop_polygon(spec, h));

  for (std::size_t k = 0; k < loops.size(); ++k) {
    for (const auto& p : loops[k])
      if (!point_in_polygon(boundary, p)) throw GeometryError("loop " + std::to_string(k) + " leaves the domain");
    if (polygon_distance(loops[k], boundary) <= 2.0 * h)
      throw GeometryError("loop " + std::to_string(k) + " is within 2h of the outer boundary");
    for (std::size_t j = 0; j < k; ++j) {
      if (polygon_distance(loops[k], loops[j]) <= 2.0 * h)
        throw GeometryError("loops " + std::to_string(j) + " and " + std::to_string(k) + " are within 2h");
      if (point_in_polygon(loops[j], loops[k].front()) || point_in_polygon(loops[k], loops[j].front()))
        throw GeometryError("loops " + std::to_string(j) + " and " + std::to_string(k) + " are nested");
    }
  }

  std::vector<Vec2> pts = boundary;
  std::vector<std::vector<int>> loop_ids;
  for (const auto& loop : loops) {
    std::vector<int> ids;
    for (const auto& p : loop) {
      ids.push_back(static_cast<int>(pts.size()));
      pts.push_back(p);
    }
    loop_ids.push_back(std::move(ids));
  }

  Vec2 lo = boundary.front(), hi = boundary.front();
  for (const auto& p : boundary) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double clearance = opt.clearance * h;
  auto clear_of = [&](const std::vector<Vec2>& poly, const Vec2& p) {
    for (std::size_t i = 0; i < poly.size(); ++i)
      if (point_segment_distance(p, poly[i], poly[(i + 1) % poly.size()]) < clearance) return false;
    return true;
  };
  const double dy = h * std::sqrt(3.0) / 2.0;
  const auto rows = static_cast<int>(std::ceil((hi.y() - lo.y()) / dy)) + 1;
  const auto cols = static_cast<int>(std::ceil((hi.x() - lo.x()) / h)) + 2;
  for (int j = 0; j < rows; ++j) {
    const double y = lo.y() + j * dy;
    for (int i = 0; i < cols; ++i) {
      const double x = lo.x() + (i + ((j % 2) ? 0.5 : 0.0)) * h;
      const Vec2 p(x, y);
      if (!point_in_polygon(boundary, p) || !clear_of(boundary, p)) continue;
      bool ok = true;
      for (const auto& loop : loops)
        if (!clear_of(loop, p)) {
          ok = false;
          break;
        }
      if (ok) pts.push_back(p);
    }
  }

  // Insert in a snake order over a coarse grid to keep point location short.
  std::vector<int> order(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) order[i] = static_cast<int>(i);
  const double cell = std::max(hi.x() - lo.x(), hi.y() - lo.y()) / std::max(1.0, std::sqrt(static_cast<double>(pts.size())) / 2.0);
  auto key = [&](int i) {
    const auto cy = static_cast<long>((pts[i].y() - lo.y()) / cell);
    auto cx = static_cast<long>((pts[i].x() - lo.x()) / cell);
    if (cy % 2) cx = 1000000 - cx;
    return std::pair<long, long>(cy, cx);
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  detail::Delaunay dt(pts);
  for (int i : order) dt.insert(i);
  std::vector<Triangle> tris = dt.triangles();

  // Drop anything outside the outer polygon (only possible for roundoff slivers).
  std::erase_if(tris, [&](const Triangle& t) {
    const Vec2 c = (pts[t[0]] + pts[t[1]] + pts[t[2]]) / 3.0;
    return !point_in_polygon(boundary, c) || !(triangle_area(pts[t[0]], pts[t[1]], pts[t[2]]) > 0.0);
  });

  std::unordered_set<std::uint64_t> edges;
  for (const auto& t : tris)
    for (int e = 0; e < 3; ++e) edges.insert(detail::edge_key(t[e], t[(e + 1) % 3]));
  const auto nb = static_cast<int>(boundary.size());
  for (int i = 0; i < nb; ++i)
    if (!edges.count(detail::edge_key(i, (i + 1) % nb)))
      throw GenerationError("outer boundary segment missing from triangulation; try a smaller h");
  for (const auto& ids : loop_ids)
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (!edges.count(detail::edge_key(ids[i], ids[(i + 1) % ids.size()])))
        throw GenerationError("interface segment missing from triangulation; try a smaller h");

  std::vector<std::string> names{opt.outer_region};
  std::vector<int> loop_region;
  for (const auto& spec : loop_specs) {
    auto it = std::find(names.begin(), names.end(), spec.region);
    if (spec.region == opt.outer_region) throw GeometryError("loop region must differ from the outer region");
    if (it == names.end()) {
      loop_region.push_back(static_cast<int>(names.size()));
      names.push_back(spec.region);
    } else {
      loop_region.push_back(static_cast<int>(it - names.begin()));
    }
  }
  std::vector<int> labels(tris.size(), 0);
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const Vec2 c = (pts[tris[t][0]] + pts[tris[t][1]] + pts[tris[t][2]]) / 3.0;
    for (std::size_t k = 0; k < loops.size(); ++k)
      if (point_in_polygon(loops[k], c)) labels[t] = loop_region[k];
  }

  // Laplacian smoothing of free nodes, rejecting moves that would invert a triangle.
  std::vector<char> fixed(pts.size(), 0);
  for (int i = 0; i < nb; ++i) fixed[i] = 1;
  for (const auto& ids : loop_ids)
    for (int i : ids) fixed[i] = 1;
  std::vector<std::vector<int>> nbrs(pts.size()), incident(pts.size());
  for (std::size_t t = 0; t < tris.size(); ++t)
    for (int e = 0; e < 3; ++e) {
      nbrs[tris[t][e]].push_back(tris[t][(e + 1) % 3]);
      nbrs[tris[t][e]].push_back(tris[t][(e + 2) % 3]);
      incident[tris[t][e]].push_back(static_cast<int>(t));
    }
  for (auto& n : nbrs) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  for (int pass = 0; pass < opt.smoothing_passes; ++pass) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (fixed[i] || nbrs[i].empty()) continue;
      Vec2 avg = Vec2::Zero();
      for (int j : nbrs[i]) avg += pts[j];
      avg /= static_cast<double>(nbrs[i].size());
      const Vec2 old = pts[i];
      pts[i] = avg;
      for (int t : incident[i])
        if (!(triangle_area(pts[tris[t][0]], pts[tris[t][1]], pts[tris[t][2]]) > 0.0)) {
          pts[i] = old;
          break;
        }
    }
  }

  // Drop lattice points that ended up unused (cannot happen for a convex hull, but cheap to guard).
  std::vector<int> remap(pts.size(), -1);
  std::vector<Vec2> used;
  for (const auto& t : tris)
    for (int v : t)
      if (remap[v] < 0) remap[v] = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (remap[i] == 0) {
      remap[i] = static_cast<int>(used.size());
      used.push_back(pts[i]);
    }
  for (auto& t : tris)
    for (int& v : t) v = remap[v];
  std::vector<InterfaceLoop> mesh_loops;
  for (std::size_t k = 0; k < loop_ids.size(); ++k) {
    InterfaceLoop l;
    for (int i : loop_ids[k]) l.nodes.push_back(remap[i]);
    l.inner_region = loop_region[k];
    mesh_loops.push_back(std::move(l));
  }

  Mesh mesh(std::move(used), std::move(tris), std::move(labels), std::move(names), 0, std::move(mesh_loops));
  const auto q = mesh_quality(mesh);
  if (!q.valid()) throw GenerationError("generated mesh has degenerate elements; try a smaller h");
  return mesh;
}

}  // namespace shapeflow
