#pragma once

#include <stdexcept>

#include "dslam/core/tensor.hpp"
#include "dslam/geom/pose.hpp"

namespace dslam {

// Square grid anchored to the pose at its creation time. The map covers the
// n_cells * cell_size square directly in front of the anchor pose: row i is
// the forward (x) axis, column j the lateral (y) axis, and the anchor sits at
// the midpoint of the rear edge.
struct MapGeometry {
  int n_cells = 40;
  double cell_size = 0.12;

  double side() const { return n_cells * cell_size; }

  // Anchor-frame point -> continuous grid coordinates, where cell (i,j)
  // covers [i,i+1) x [j,j+1).
  void to_grid(double x, double y, double& u, double& v) const {
    u = x / cell_size;
    v = (y + 0.5 * side()) / cell_size;
  }

  void cell_center(int i, int j, double& x, double& y) const {
    x = (i + 0.5) * cell_size;
    y = (j + 0.5) * cell_size - 0.5 * side();
  }

  bool in_bounds(int i, int j) const { return i >= 0 && i < n_cells && j >= 0 && j < n_cells; }

  bool operator==(const MapGeometry& o) const {
    return n_cells == o.n_cells && cell_size == o.cell_size;
  }
  bool operator!=(const MapGeometry& o) const { return !(*this == o); }
};

// Channel layout: optional occupancy first, then the mandatory visibility
// channel, then any latent channels.
struct LocalMap {
  MapGeometry geom;
  Tensor channels;  // [n, n, n_ch]
  int occ_channel = -1;
  int vis_channel = 0;
  int n_latent = 0;

  int n_channels() const { return channels.dim(2); }
  bool has_occupancy() const { return occ_channel >= 0; }

  double occ(int i, int j) const { return channels.at(i, j, occ_channel); }
  double vis(int i, int j) const { return channels.at(i, j, vis_channel); }

  static LocalMap make(const MapGeometry& geom, bool with_occupancy, int n_latent,
                       double occ_fill = 0.5) {
    LocalMap m;
    m.geom = geom;
    const int n_ch = (with_occupancy ? 1 : 0) + 1 + n_latent;
    m.channels = Tensor(Shape{geom.n_cells, geom.n_cells, n_ch});
    m.occ_channel = with_occupancy ? 0 : -1;
    m.vis_channel = with_occupancy ? 1 : 0;
    m.n_latent = n_latent;
    if (with_occupancy) {
      for (int i = 0; i < geom.n_cells; ++i)
        for (int j = 0; j < geom.n_cells; ++j) m.channels.at(i, j, 0) = occ_fill;
    }
    return m;
  }
};

inline void check_same_geometry(const LocalMap& a, const LocalMap& b) {
  if (a.geom != b.geom || a.n_channels() != b.n_channels())
    throw std::invalid_argument("local map geometry mismatch");
}

}  // namespace dslam
