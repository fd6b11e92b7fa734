#pragma once

#include <cmath>

#include "dslam/core/autodiff.hpp"

namespace dslam {

// Planar pose; theta stored wrapped to (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  static Pose2D identity() { return {}; }

  bool operator==(const Pose2D& o) const = default;
};

inline Pose2D make_pose(double x, double y, double theta) { return {x, y, wrap_pi(theta)}; }

// Pose of b expressed in a's parent frame (SE(2) group product).
inline Pose2D compose(const Pose2D& a, const Pose2D& b) {
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, wrap_pi(a.theta + b.theta)};
}

inline Pose2D inverse(const Pose2D& p) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  return {-(c * p.x + s * p.y), s * p.x - c * p.y, wrap_pi(-p.theta)};
}

// inverse(a) o b; satisfies compose(a, relative(a, b)) == b.
inline Pose2D relative(const Pose2D& a, const Pose2D& b) { return compose(inverse(a), b); }

// Point (px, py) given in p's frame, expressed in p's parent frame.
inline void transform_point(const Pose2D& p, double px, double py, double& ox, double& oy) {
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  ox = p.x + c * px - s * py;
  oy = p.y + s * px + c * py;
}

inline double distance(const Pose2D& a, const Pose2D& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

inline double angle_diff(double a, double b) { return wrap_pi(a - b); }

}  // namespace dslam
