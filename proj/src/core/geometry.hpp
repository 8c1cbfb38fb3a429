#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

namespace papercut {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct SegmentClosest {
  double s = 0;  // parameter on first segment
  double t = 0;  // parameter on second segment
  double distance = 0;
};

// Closest points between segments [p0,p1] and [q0,q1]; robust for the
// degenerate and parallel cases.
inline SegmentClosest closest_segment_segment(const Vec3& p0, const Vec3& p1,
                                              const Vec3& q0, const Vec3& q1) {
  const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0, t = 0;
  const double eps = 1e-30;
  if (a <= eps && e <= eps) {
    s = t = 0;
  } else if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > eps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0) {
        t = 0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1) {
        t = 1;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  SegmentClosest out;
  out.s = s;
  out.t = t;
  out.distance = ((p0 + s * d1) - (q0 + t * d2)).norm();
  return out;
}

// Parameter of the closest point on [a,b]; distance via caller.
inline double closest_point_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double den = ab.squaredNorm();
  if (den <= 1e-30) return 0.0;
  return std::clamp((p - a).dot(ab) / den, 0.0, 1.0);
}

inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const double t = closest_point_segment(p, a, b);
  return (p - (a + t * (b - a))).norm();
}

inline double point_segment_distance2(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double den = ab.squaredNorm();
  const double t = den <= 1e-30 ? 0.0 : std::clamp((p - a).dot(ab) / den, 0.0, 1.0);
  return (p - (a + t * (b - a))).norm();
}

// Closest point on triangle (a,b,c) to p, returned as barycentric weights.
inline Eigen::Vector3d closest_point_triangle_bary(const Vec3& p, const Vec3& a,
                                                   const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

inline double triangle_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
}

// Barycentric coordinates of p in UV triangle (a,b,c); valid for
// non-degenerate triangles only.
inline Eigen::Vector3d barycentric2(const Vec2& p, const Vec2& a, const Vec2& b,
                                    const Vec2& c) {
  const double area = triangle_area2(a, b, c);
  const double wa = triangle_area2(p, b, c) / area;
  const double wb = triangle_area2(a, p, c) / area;
  return {wa, wb, 1.0 - wa - wb};
}

inline Vec2 rot90(const Vec2& v) { return {-v.y(), v.x()}; }

// Cumulative arc length table; front is 0.
inline std::vector<double> arc_length_table(const std::vector<Vec2>& pts) {
  std::vector<double> acc(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i) {
    acc[i] = acc[i - 1] + (pts[i] - pts[i - 1]).norm();
  }
  return acc;
}

// `count` points equally spaced in arc length along the polyline
// (endpoints included). A single-vertex polyline repeats its point.
std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int count);

// Distance from p to the nearest segment of the polyline.
double point_polyline_distance(const Vec2& p, const std::vector<Vec2>& poly);

// Even-odd rule; `poly` is a closed ring (first == last or implicitly closed).
bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly);

}  // namespace papercut
