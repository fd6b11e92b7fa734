#pragma once

#include "dslam/core/autodiff.hpp"
#include "dslam/geom/local_map.hpp"
#include "dslam/geom/pose.hpp"

namespace dslam {

// Differentiable rigid warp of map channels. `rel` is the pose of the output
// frame expressed in the input map's frame, i.e. to bring a past map to the
// current viewpoint pass relative(past_anchor, current_anchor). Channels and
// pose may live on a tape; out-of-bounds samples are zero.
inline Tensor warp_channels(const Tensor& channels, const Tensor& rel, double cell_size) {
  return bilinear_warp(channels, rel, cell_size);
}

inline LocalMap warp_local_map(const LocalMap& map, const Pose2D& rel) {
  LocalMap out = map;
  Tensor pose = Tensor::vector({rel.x, rel.y, rel.theta});
  out.channels = bilinear_warp(map.channels, pose, map.geom.cell_size);
  return out;
}

inline Tensor pose_tensor(const Pose2D& p) { return Tensor::vector({p.x, p.y, p.theta}); }

}  // namespace dslam
