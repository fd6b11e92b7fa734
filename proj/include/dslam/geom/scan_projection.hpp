#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dslam/geom/grid_walk.hpp"
#include "dslam/geom/local_map.hpp"
#include "dslam/sim/range_scan.hpp"

namespace dslam {

// Geometric projection of a range scan into a local map (inverse sensor
// model). Visibility is 1 on cells traversed by any beam up to and including
// its hit cell. Occupancy is 1 on hit cells (range < r_max), 0 on traversed
// free cells, 0.5 elsewhere. Across beams, a confident free traversal
// overrides another beam's hit: surfaces recorded obliquely must not bleed
// into cells the sensor saw through.
inline LocalMap scan_to_local_map(const RangeScan& scan, const MapGeometry& geom) {
  scan.validate();
  LocalMap map = LocalMap::make(geom, /*with_occupancy=*/true, /*n_latent=*/0);
  const double max_eps = 1e-9;
  const int n = geom.n_cells;

  enum : uint8_t { kUnknown = 0, kHit = 1, kFree = 2 };
  std::vector<uint8_t> state(size_t(n) * n, kUnknown);

  double u0, v0;
  geom.to_grid(0.0, 0.0, u0, v0);

  for (int b = 0; b < scan.beam_count(); ++b) {
    const double r = scan.ranges[b];
    const double ang = scan.beam_angle(b);
    const bool hit = r < scan.r_max - max_eps;
    const double ex = r * std::cos(ang);
    const double ey = r * std::sin(ang);
    double u1, v1;
    geom.to_grid(ex, ey, u1, v1);
    const int hit_i = int(std::floor(u1));
    const int hit_j = int(std::floor(v1));

    bool entered = false;
    walk_cells(u0, v0, u1, v1, [&](int i, int j) {
      if (!geom.in_bounds(i, j)) return !entered;  // rays leave the map square once
      entered = true;
      map.channels.at(i, j, map.vis_channel) = 1.0;
      uint8_t& s = state[size_t(i) * n + j];
      if (hit && i == hit_i && j == hit_j) {
        if (s == kUnknown) s = kHit;
      } else {
        s = kFree;
      }
      return true;
    });
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const uint8_t s = state[size_t(i) * n + j];
      if (s != kUnknown) map.channels.at(i, j, map.occ_channel) = s == kHit ? 1.0 : 0.0;
    }
  return map;
}

}  // namespace dslam
