#pragma once

#include <cmath>
#include <stdexcept>

#include "dslam/core/random.hpp"
#include "dslam/geom/pose.hpp"
#include "dslam/sim/floorplan.hpp"
#include "dslam/sim/range_scan.hpp"

namespace dslam {

struct SensorConfig {
  int beams = 60;
  double fov = 70.0 * M_PI / 180.0;
  double r_max = 10.0;
  double r_min = 0.1;
  double noise_std = 0.01;  // multiplicative
};

// Exact distance from (x, y) along `angle` to the first occupied cell
// boundary, capped at r_max.
inline double ray_cast(const FloorPlan& plan, double x, double y, double angle, double r_max) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double gx0 = x / plan.cell, gy0 = y / plan.cell;
  const double gx1 = (x + r_max * dx) / plan.cell, gy1 = (y + r_max * dy) / plan.cell;

  int i = int(std::floor(gx0));
  int j = int(std::floor(gy0));
  const int i_end = int(std::floor(gx1));
  const int j_end = int(std::floor(gy1));
  const int step_i = gx1 > gx0 ? 1 : (gx1 < gx0 ? -1 : 0);
  const int step_j = gy1 > gy0 ? 1 : (gy1 < gy0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  double t_max_x = inf, t_delta_x = inf, t_max_y = inf, t_delta_y = inf;
  if (step_i != 0) {
    const double next = step_i > 0 ? double(i + 1) : double(i);
    t_max_x = (next - gx0) / (gx1 - gx0);
    t_delta_x = double(step_i) / (gx1 - gx0);
  }
  if (step_j != 0) {
    const double next = step_j > 0 ? double(j + 1) : double(j);
    t_max_y = (next - gy0) / (gy1 - gy0);
    t_delta_y = double(step_j) / (gy1 - gy0);
  }

  if (plan.occupied(i, j)) return 0.0;
  int guard = std::abs(i_end - i) + std::abs(j_end - j) + 2;
  while (guard-- > 0) {
    double t_entry;
    if (t_max_x < t_max_y) {
      t_entry = t_max_x;
      if (t_entry > 1.0) break;
      i += step_i;
      t_max_x += t_delta_x;
    } else {
      t_entry = t_max_y;
      if (t_entry > 1.0) break;
      j += step_j;
      t_max_y += t_delta_y;
    }
    if (plan.occupied(i, j)) return t_entry * r_max;
  }
  return r_max;
}

// Per beam: exact ray-cast distance, then multiplied by (1 + N(0, noise_std))
// and clamped to [r_min, r_max].
inline RangeScan simulate_scan(const Pose2D& pose, const FloorPlan& plan,
                               const SensorConfig& cfg, Rng& rng) {
  if (plan.occupied_at(pose.x, pose.y))
    throw std::invalid_argument("simulate_scan: pose inside an obstacle");
  RangeScan scan;
  scan.fov = cfg.fov;
  scan.r_max = cfg.r_max;
  scan.r_min = cfg.r_min;
  scan.ranges.resize(size_t(cfg.beams));
  for (int b = 0; b < cfg.beams; ++b) {
    const double ang = pose.theta + scan.beam_angle(b);
    double r = ray_cast(plan, pose.x, pose.y, ang, cfg.r_max);
    if (cfg.noise_std > 0) r *= 1.0 + rng.normal(0.0, cfg.noise_std);
    scan.ranges[size_t(b)] = std::min(cfg.r_max, std::max(cfg.r_min, r));
  }
  return scan;
}

}  // namespace dslam
