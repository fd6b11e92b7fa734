#pragma once

#include <cmath>
#include <limits>

namespace dslam {

// Amanatides-Woo traversal of the cells crossed by the segment (x0,y0)->(x1,y1)
// in grid units (cell (i,j) covers [i,i+1) x [j,j+1)). Visits every crossed
// cell in order, including the endpoint cell. The visitor returns false to
// stop early.
template <typename Visit>
inline void walk_cells(double x0, double y0, double x1, double y1, Visit&& visit) {
  const double dx = x1 - x0, dy = y1 - y0;
  int i = int(std::floor(x0));
  int j = int(std::floor(y0));
  const int i_end = int(std::floor(x1));
  const int j_end = int(std::floor(y1));

  const int step_i = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_j = dy > 0 ? 1 : (dy < 0 ? -1 : 0);

  const double inf = std::numeric_limits<double>::infinity();
  double t_max_x = inf, t_delta_x = inf;
  double t_max_y = inf, t_delta_y = inf;
  if (step_i != 0) {
    const double next_x = step_i > 0 ? double(i + 1) : double(i);
    t_max_x = (next_x - x0) / dx;
    t_delta_x = double(step_i) / dx;
  }
  if (step_j != 0) {
    const double next_y = step_j > 0 ? double(j + 1) : double(j);
    t_max_y = (next_y - y0) / dy;
    t_delta_y = double(step_j) / dy;
  }

  // Bounded by the segment's cell span; guards degenerate float cases.
  int guard = std::abs(i_end - i) + std::abs(j_end - j) + 2;
  while (guard-- > 0) {
    if (!visit(i, j)) return;
    if (i == i_end && j == j_end) return;
    if (t_max_x < t_max_y) {
      if (t_max_x > 1.0) return;
      i += step_i;
      t_max_x += t_delta_x;
    } else {
      if (t_max_y > 1.0) return;
      j += step_j;
      t_max_y += t_delta_y;
    }
  }
}

}  // namespace dslam
