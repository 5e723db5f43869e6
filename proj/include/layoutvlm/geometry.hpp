#pragma once

// Oriented bounding boxes restricted to yaw: footprint corners, convex
// polygon clipping, IoU and the Distance-IoU metric.
//
// Everything is templated on the scalar so the same code yields values
// (double) and exact derivatives (Jet).

#include <array>
#include <cmath>
#include <vector>

#include "layoutvlm/autodiff.hpp"
#include "layoutvlm/scene.hpp"

namespace layoutvlm {

template <class T>
struct Point2 {
  T x{};
  T y{};

  Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(const T& s) const { return {x * s, y * s}; }
};

template <class T>
T dot(const Point2<T>& a, const Point2<T>& b) {
  return a.x * b.x + a.y * b.y;
}

template <class T>
T cross(const Point2<T>& a, const Point2<T>& b) {
  return a.x * b.y - a.y * b.x;
}

template <class T>
struct Obb2T {
  Point2<T> center;
  Point2<T> half_extents;
  T theta{};
};

template <class T>
struct Obb3T {
  Obb2T<T> footprint;
  T z_min{};
  T z_max{};
};

using Obb2 = Obb2T<double>;
using Obb3 = Obb3T<double>;
template <class T>
using Polygon = std::vector<Point2<T>>;

enum class IouMode { kXY, kXYZ };

/// Box of an asset at a pose. Pose z is the centroid height.
template <class T>
Obb3T<T> make_box(const T& x, const T& y, const T& z, const T& theta, const Dims& dims) {
  return {{{x, y}, {T(dims.x / 2.0), T(dims.y / 2.0)}, theta},
          z - T(dims.z / 2.0),
          z + T(dims.z / 2.0)};
}

inline Obb3 make_box(const Pose& pose, const Dims& dims) {
  return make_box<double>(pose.x, pose.y, pose.z, pose.theta, dims);
}

/// Counterclockwise, starting from the (+hx, +hy) corner.
template <class T>
std::array<Point2<T>, 4> corners(const Obb2T<T>& box) {
  using std::cos;
  using std::sin;
  const T c = cos(box.theta);
  const T s = sin(box.theta);
  const T hx = box.half_extents.x;
  const T hy = box.half_extents.y;
  auto place = [&](const T& lx, const T& ly) {
    return Point2<T>{box.center.x + c * lx - s * ly, box.center.y + s * lx + c * ly};
  };
  return {place(hx, hy), place(-hx, hy), place(-hx, -hy), place(hx, -hy)};
}

template <class T>
Polygon<T> to_polygon(const Obb2T<T>& box) {
  auto c = corners(box);
  return {c.begin(), c.end()};
}

/// Half-extents of the axis-aligned hull of a rotated footprint.
inline Vec2 aabb_half_extents(const Dims& dims, double theta) {
  const double c = std::abs(std::cos(theta));
  const double s = std::abs(std::sin(theta));
  return {c * dims.x / 2.0 + s * dims.y / 2.0, s * dims.x / 2.0 + c * dims.y / 2.0};
}

/// Shoelace area; positive for counterclockwise polygons.
template <class T>
T polygon_area(const Polygon<T>& poly) {
  T twice{0.0};
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    twice = twice + cross(poly[i], poly[(i + 1) % n]);
  }
  return twice * 0.5;
}

/// Area of the intersection of two convex counterclockwise polygons.
/// Sutherland-Hodgman clipping of `a` against each edge of `b`.
template <class T>
T polygon_intersection_area(const Polygon<T>& a, const Polygon<T>& b) {
  if (a.size() < 3 || b.size() < 3) return T(0.0);
  if (value_of(polygon_area(a)) <= 0.0 || value_of(polygon_area(b)) <= 0.0) return T(0.0);

  Polygon<T> current = a;
  Polygon<T> next;
  next.reserve(a.size() + b.size());
  const std::size_t m = b.size();
  for (std::size_t e = 0; e < m && !current.empty(); ++e) {
    const Point2<T>& p0 = b[e];
    const Point2<T> edge = b[(e + 1) % m] - p0;
    next.clear();
    const std::size_t n = current.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2<T>& s = current[i];
      const Point2<T>& t = current[(i + 1) % n];
      const T ds = cross(edge, s - p0);
      const T dt = cross(edge, t - p0);
      const bool s_in = value_of(ds) >= 0.0;
      const bool t_in = value_of(dt) >= 0.0;
      if (s_in) next.push_back(s);
      if (s_in != t_in) {
        const T u = ds / (ds - dt);
        next.push_back(s + (t - s) * u);
      }
    }
    std::swap(current, next);
  }
  if (current.size() < 3) return T(0.0);
  const T area = polygon_area(current);
  return value_of(area) > 0.0 ? area : T(0.0);
}

template <class T>
T interval_overlap(const T& a0, const T& a1, const T& b0, const T& b1) {
  const T lo = max_of(a0, b0);
  const T hi = min_of(a1, b1);
  return value_of(hi) > value_of(lo) ? hi - lo : T(0.0);
}

template <class T>
T footprint_area(const Obb2T<T>& box) {
  return box.half_extents.x * box.half_extents.y * 4.0;
}

template <class T>
T iou(const Obb3T<T>& a, const Obb3T<T>& b, IouMode mode) {
  const T inter_xy = polygon_intersection_area(to_polygon(a.footprint), to_polygon(b.footprint));
  const T area_a = footprint_area(a.footprint);
  const T area_b = footprint_area(b.footprint);
  if (mode == IouMode::kXY) {
    return inter_xy / (area_a + area_b - inter_xy);
  }
  const T inter = inter_xy * interval_overlap(a.z_min, a.z_max, b.z_min, b.z_max);
  const T vol_a = area_a * (a.z_max - a.z_min);
  const T vol_b = area_b * (b.z_max - b.z_min);
  return inter / (vol_a + vol_b - inter);
}

/// IoU - rho^2 / c^2, where rho is the center distance and c the diagonal of
/// the smallest axis-aligned box enclosing both boxes.
template <class T>
T diou(const Obb3T<T>& a, const Obb3T<T>& b, IouMode mode) {
  const auto ca = corners(a.footprint);
  const auto cb = corners(b.footprint);
  T min_x = ca[0].x, max_x = ca[0].x, min_y = ca[0].y, max_y = ca[0].y;
  auto extend = [&](const Point2<T>& p) {
    min_x = min_of(min_x, p.x);
    max_x = max_of(max_x, p.x);
    min_y = min_of(min_y, p.y);
    max_y = max_of(max_y, p.y);
  };
  for (const auto& p : ca) extend(p);
  for (const auto& p : cb) extend(p);

  const Point2<T> d = a.footprint.center - b.footprint.center;
  T rho2 = dot(d, d);
  const T ex = max_x - min_x;
  const T ey = max_y - min_y;
  T c2 = ex * ex + ey * ey;
  if (mode == IouMode::kXYZ) {
    const T dz = (a.z_min + a.z_max) * 0.5 - (b.z_min + b.z_max) * 0.5;
    rho2 = rho2 + dz * dz;
    const T ez = max_of(a.z_max, b.z_max) - min_of(a.z_min, b.z_min);
    c2 = c2 + ez * ez;
  }
  return iou(a, b, mode) - rho2 / c2;
}

template <class T>
T point_segment_distance(const Point2<T>& p, const Point2<T>& s0, const Point2<T>& s1) {
  const Point2<T> seg = s1 - s0;
  const T len2 = dot(seg, seg);
  T t = dot(p - s0, seg) / len2;
  t = clamp_of(t, 0.0, 1.0);
  const Point2<T> closest = s0 + seg * t;
  const Point2<T> diff = p - closest;
  return safe_sqrt(dot(diff, diff));
}

inline double point_segment_distance(Vec2 p, Vec2 s0, Vec2 s1) {
  return point_segment_distance<double>({p.x, p.y}, {s0.x, s0.y}, {s1.x, s1.y});
}

/// Cheap rejection test: do the axis-aligned hulls of two boxes overlap with
/// positive volume?
inline bool aabb_overlap(const Pose& pa, const Dims& da, const Pose& pb, const Dims& db) {
  const Vec2 ha = aabb_half_extents(da, pa.theta);
  const Vec2 hb = aabb_half_extents(db, pb.theta);
  return std::abs(pa.x - pb.x) < ha.x + hb.x && std::abs(pa.y - pb.y) < ha.y + hb.y &&
         std::abs(pa.z - pb.z) < (da.z + db.z) / 2.0;
}

}  // namespace layoutvlm
