#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "dslam/geom/local_map.hpp"
#include "dslam/geom/pose.hpp"

namespace dslam {

namespace detail {

struct Pt {
  double x, y;
};

// Sutherland-Hodgman clip of a convex polygon against the half-plane left of
// the directed edge a->b.
inline std::vector<Pt> clip_halfplane(const std::vector<Pt>& poly, Pt a, Pt b) {
  std::vector<Pt> out;
  out.reserve(poly.size() + 1);
  const double ex = b.x - a.x, ey = b.y - a.y;
  auto side = [&](const Pt& p) { return ex * (p.y - a.y) - ey * (p.x - a.x); };
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Pt& p = poly[i];
    const Pt& q = poly[(i + 1) % n];
    const double sp = side(p), sq = side(q);
    if (sp >= 0) out.push_back(p);
    if ((sp > 0 && sq < 0) || (sp < 0 && sq > 0)) {
      const double t = sp / (sp - sq);
      out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
    }
  }
  return out;
}

inline double polygon_area(const std::vector<Pt>& poly) {
  double a = 0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Pt& p = poly[i];
    const Pt& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

// Counter-clockwise corners of the square footprint in front of `pose`.
inline std::array<Pt, 4> footprint_corners(const Pose2D& pose, double side) {
  std::array<Pt, 4> c;
  const double local[4][2] = {
      {0.0, -0.5 * side}, {side, -0.5 * side}, {side, 0.5 * side}, {0.0, 0.5 * side}};
  for (int k = 0; k < 4; ++k) transform_point(pose, local[k][0], local[k][1], c[k].x, c[k].y);
  return c;
}

}  // namespace detail

// Intersection area of the two oriented square footprints (each the map
// square in front of its pose). Symmetric; in [0, side^2].
inline double footprint_overlap(const Pose2D& a, const Pose2D& b, const MapGeometry& geom) {
  const double side = geom.side();
  // Quick reject: footprint centers farther apart than the circumscribed radii.
  double acx, acy, bcx, bcy;
  transform_point(a, 0.5 * side, 0.0, acx, acy);
  transform_point(b, 0.5 * side, 0.0, bcx, bcy);
  const double diag = side * std::sqrt(2.0);
  if (std::hypot(acx - bcx, acy - bcy) > diag) return 0.0;

  const auto ca = detail::footprint_corners(a, side);
  const auto cb = detail::footprint_corners(b, side);
  std::vector<detail::Pt> poly(ca.begin(), ca.end());
  for (int k = 0; k < 4 && !poly.empty(); ++k)
    poly = detail::clip_halfplane(poly, cb[size_t(k)], cb[size_t((k + 1) % 4)]);
  if (poly.size() < 3) return 0.0;
  return detail::polygon_area(poly);
}

}  // namespace dslam
