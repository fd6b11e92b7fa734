#pragma once

#include "dslam/geom/local_map.hpp"
#include "dslam/sim/floorplan.hpp"

namespace dslam {

// Ground-truth occupancy for the local map footprint at `world_pose`,
// rendered from the floorplan (1 = occupied). Used as labels for occupancy
// pretraining, masked to the visible cells of the corresponding scan.
inline Tensor render_local_occupancy(const FloorPlan& plan, const Pose2D& world_pose,
                                     const MapGeometry& geom) {
  Tensor out(Shape{geom.n_cells, geom.n_cells, 1});
  for (int i = 0; i < geom.n_cells; ++i)
    for (int j = 0; j < geom.n_cells; ++j) {
      double lx, ly;
      geom.cell_center(i, j, lx, ly);
      double wx, wy;
      transform_point(world_pose, lx, ly, wx, wy);
      out.at(i, j, 0) = plan.occupied_at(wx, wy) ? 1.0 : 0.0;
    }
  return out;
}

}  // namespace dslam
