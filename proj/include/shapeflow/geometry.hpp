#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace shapeflow {

using Vec2 = Eigen::Vector2d;

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Twice the signed area of (a, b, c); positive for counter-clockwise order.
inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) { return cross(b - a, c - a); }

inline double triangle_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * orient2d(a, b, c);
}

/// Signed area of a closed polygon (shoelace).
inline double polygon_signed_area(std::span<const Vec2> poly) {
  double s = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) s += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * s;
}

inline double polygon_perimeter(std::span<const Vec2> poly) {
  double s = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) s += (poly[(i + 1) % n] - poly[i]).norm();
  return s;
}

/// Winding number of a closed polygon around p. Zero for outside points.
inline int winding_number(std::span<const Vec2> poly, const Vec2& p) {
  int wn = 0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    if (a.y() <= p.y()) {
      if (b.y() > p.y() && orient2d(a, b, p) > 0) ++wn;
    } else {
      if (b.y() <= p.y() && orient2d(a, b, p) < 0) --wn;
    }
  }
  return wn;
}

inline bool point_in_polygon(std::span<const Vec2> poly, const Vec2& p) {
  return winding_number(poly, p) != 0;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + s * ab)).norm();
}

/// Closest point on segment [a, b] to p.
inline Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + s * ab;
}

/// True if closed segments [a, b] and [c, d] share at least one point.
inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double d1 = orient2d(c, d, a);
  const double d2 = orient2d(c, d, b);
  const double d3 = orient2d(a, b, c);
  const double d4 = orient2d(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) &&
           std::min(p.y(), q.y()) <= r.y() && r.y() <= std::max(p.y(), q.y());
  };
  if (d1 == 0 && on_segment(c, d, a)) return true;
  if (d2 == 0 && on_segment(c, d, b)) return true;
  if (d3 == 0 && on_segment(a, b, c)) return true;
  if (d4 == 0 && on_segment(a, b, d)) return true;
  return false;
}

inline double segment_segment_distance(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

/// Minimum distance between two closed polylines (zero if they cross).
inline double polygon_distance(std::span<const Vec2> p, std::span<const Vec2> q) {
  double best = INFINITY;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j)
      best = std::min(best, segment_segment_distance(p[i], p[(i + 1) % p.size()], q[j],
                                                     q[(j + 1) % q.size()]));
  return best;
}

/// A closed polygon is simple if no two non-adjacent edges touch and no two
/// consecutive vertices coincide.
inline bool polygon_is_simple(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (poly[i] == poly[(i + 1) % n]) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) {
        // Adjacent edges share one vertex; they must not fold back onto each other.
        const std::size_t shared = (j == i + 1) ? j : i;
        const Vec2& p = poly[shared];
        const Vec2& q = (j == i + 1) ? a : b;
        const Vec2& r = (j == i + 1) ? poly[(j + 1) % n] : poly[(j + n - 1) % n];
        if (orient2d(q, p, r) == 0.0 && (q - p).dot(r - p) > 0.0) return false;
        continue;
      }
      if (segments_intersect(a, b, poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

}  // namespace shapeflow
