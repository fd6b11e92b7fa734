#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "dslam/core/random.hpp"
#include "dslam/geom/pose.hpp"

namespace dslam {

// Occupancy bitmap of a procedurally generated indoor world. World frame
// origin is the lower-left corner of the bitmap; cells are `cell` meters.
struct FloorPlan {
  int n = 0;                      // cells per side (square)
  double cell = 0.06;             // meters
  std::vector<uint8_t> occ;       // 1 = occupied
  std::vector<int> component;     // flood-fill label per cell, -1 for occupied
  std::vector<float> clearance;   // chamfer distance to nearest obstacle, meters
  int main_component = -1;
  uint64_t seed = 0;

  double extent() const { return n * cell; }

  bool in_bounds(int i, int j) const { return i >= 0 && i < n && j >= 0 && j < n; }

  bool occupied(int i, int j) const {
    if (!in_bounds(i, j)) return true;
    return occ[size_t(i) * n + j] != 0;
  }

  // World point -> cell indices (i along x, j along y).
  void to_cell(double x, double y, int& i, int& j) const {
    i = int(std::floor(x / cell));
    j = int(std::floor(y / cell));
  }

  void cell_center(int i, int j, double& x, double& y) const {
    x = (i + 0.5) * cell;
    y = (j + 0.5) * cell;
  }

  bool occupied_at(double x, double y) const {
    int i, j;
    to_cell(x, y, i, j);
    return occupied(i, j);
  }

  double clearance_at(double x, double y) const {
    int i, j;
    to_cell(x, y, i, j);
    if (!in_bounds(i, j)) return 0.0;
    return clearance[size_t(i) * n + j];
  }

  // Disc of `radius` around (x, y) fits in free space.
  bool disc_free(double x, double y, double radius) const {
    return clearance_at(x, y) > radius;
  }

  bool same_component(double x0, double y0, double x1, double y1) const {
    int i0, j0, i1, j1;
    to_cell(x0, y0, i0, j0);
    to_cell(x1, y1, i1, j1);
    if (!in_bounds(i0, j0) || !in_bounds(i1, j1)) return false;
    const int a = component[size_t(i0) * n + j0];
    const int b = component[size_t(i1) * n + j1];
    return a >= 0 && a == b;
  }

  double free_fraction() const {
    int free_cells = 0;
    for (uint8_t v : occ) free_cells += v == 0;
    return double(free_cells) / double(n) / double(n);
  }
};

namespace detail {

inline void flood_fill_components(FloorPlan& plan) {
  const int n = plan.n;
  plan.component.assign(size_t(n) * n, -1);
  int next = 0;
  std::vector<int> stack;
  std::vector<int> sizes;
  for (int start = 0; start < n * n; ++start) {
    if (plan.occ[size_t(start)] || plan.component[size_t(start)] >= 0) continue;
    const int label = next++;
    sizes.push_back(0);
    stack.push_back(start);
    plan.component[size_t(start)] = label;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      ++sizes[size_t(label)];
      const int ci = cur / n, cj = cur % n;
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int ni = ci + di[k], nj = cj + dj[k];
        if (ni < 0 || ni >= n || nj < 0 || nj >= n) continue;
        const int idx = ni * n + nj;
        if (plan.occ[size_t(idx)] || plan.component[size_t(idx)] >= 0) continue;
        plan.component[size_t(idx)] = label;
        stack.push_back(idx);
      }
    }
  }
  plan.main_component = -1;
  int best = -1;
  for (int l = 0; l < next; ++l)
    if (sizes[size_t(l)] > best) {
      best = sizes[size_t(l)];
      plan.main_component = l;
    }
}

// Two-pass 8-connected chamfer distance to the nearest occupied cell.
inline void chamfer_clearance(FloorPlan& plan) {
  const int n = plan.n;
  const float big = std::numeric_limits<float>::max() / 4;
  const float straight = float(plan.cell);
  const float diag = float(plan.cell * std::sqrt(2.0));
  plan.clearance.assign(size_t(n) * n, big);
  auto& d = plan.clearance;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (plan.occ[size_t(i) * n + j]) d[size_t(i) * n + j] = 0;
  auto relax = [&](int i, int j, int pi, int pj, float w) {
    if (pi < 0 || pi >= n || pj < 0 || pj >= n) return;
    d[size_t(i) * n + j] = std::min(d[size_t(i) * n + j], d[size_t(pi) * n + pj] + w);
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      relax(i, j, i - 1, j, straight);
      relax(i, j, i, j - 1, straight);
      relax(i, j, i - 1, j - 1, diag);
      relax(i, j, i - 1, j + 1, diag);
    }
  for (int i = n - 1; i >= 0; --i)
    for (int j = n - 1; j >= 0; --j) {
      relax(i, j, i + 1, j, straight);
      relax(i, j, i, j + 1, straight);
      relax(i, j, i + 1, j + 1, diag);
      relax(i, j, i + 1, j - 1, diag);
    }
}

struct BspConfig {
  int min_room_cells = 30;    // 1.8 m
  int max_room_cells = 80;    // 4.8 m
  int wall_cells = 2;         // 12 cm walls
  int door_cells_min = 16;    // ~1 m doors
  int door_cells_max = 20;
  int n_clutter = 6;
};

inline void carve_bsp(FloorPlan& plan, int i0, int i1, int j0, int j1, const BspConfig& cfg,
                      Rng& rng, int depth) {
  const int h = i1 - i0, w = j1 - j0;
  const bool can_split_i = h >= 2 * cfg.min_room_cells + cfg.wall_cells;
  const bool can_split_j = w >= 2 * cfg.min_room_cells + cfg.wall_cells;
  const bool must_split = h > cfg.max_room_cells || w > cfg.max_room_cells;
  if ((!can_split_i && !can_split_j) || (!must_split && depth > 1 && rng.uniform() < 0.15))
    return;

  bool split_i;
  if (can_split_i && can_split_j)
    split_i = h > w ? true : (w > h ? false : rng.uniform() < 0.5);
  else
    split_i = can_split_i;

  if (split_i) {
    const int lo = i0 + cfg.min_room_cells;
    const int hi = i1 - cfg.min_room_cells - cfg.wall_cells;
    const int s = lo + rng.uniform_int(hi - lo + 1);
    const int door_w = cfg.door_cells_min +
                       rng.uniform_int(cfg.door_cells_max - cfg.door_cells_min + 1);
    const int door_at = j0 + rng.uniform_int(std::max(1, w - door_w));
    for (int i = s; i < s + cfg.wall_cells; ++i)
      for (int j = j0; j < j1; ++j)
        if (j < door_at || j >= door_at + door_w) plan.occ[size_t(i) * plan.n + j] = 1;
    carve_bsp(plan, i0, s, j0, j1, cfg, rng, depth + 1);
    carve_bsp(plan, s + cfg.wall_cells, i1, j0, j1, cfg, rng, depth + 1);
  } else {
    const int lo = j0 + cfg.min_room_cells;
    const int hi = j1 - cfg.min_room_cells - cfg.wall_cells;
    const int s = lo + rng.uniform_int(hi - lo + 1);
    const int door_w = cfg.door_cells_min +
                       rng.uniform_int(cfg.door_cells_max - cfg.door_cells_min + 1);
    const int door_at = i0 + rng.uniform_int(std::max(1, h - door_w));
    for (int j = s; j < s + cfg.wall_cells; ++j)
      for (int i = i0; i < i1; ++i)
        if (i < door_at || i >= door_at + door_w) plan.occ[size_t(i) * plan.n + j] = 1;
    carve_bsp(plan, i0, i1, j0, s, cfg, rng, depth + 1);
    carve_bsp(plan, i0, i1, s + cfg.wall_cells, j1, cfg, rng, depth + 1);
  }
}

}  // namespace detail

// Rooms-and-corridors layout via recursive spatial partition with door
// carving. Deterministic per seed; retries with a salted stream until the
// free-space invariants hold.
inline FloorPlan generate_floorplan(uint64_t seed, double extent_m = 12.0, double cell = 0.06) {
  const int n = int(std::lround(extent_m / cell));
  for (int attempt = 0; attempt < 32; ++attempt) {
    FloorPlan plan;
    plan.n = n;
    plan.cell = cell;
    plan.seed = seed;
    plan.occ.assign(size_t(n) * n, 0);
    Rng rng = Rng(seed).split(uint64_t(attempt)).split("floorplan");

    const int border = 2;  // 12 cm outer walls
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i < border || j < border || i >= n - border || j >= n - border)
          plan.occ[size_t(i) * n + j] = 1;

    detail::BspConfig cfg;
    detail::carve_bsp(plan, border, n - border, border, n - border, cfg, rng, 0);

    // Box clutter away from walls so door passages stay open.
    detail::chamfer_clearance(plan);
    for (int k = 0; k < cfg.n_clutter; ++k) {
      const int bi = 3 + rng.uniform_int(std::max(1, n / 16));
      const int bj = 3 + rng.uniform_int(std::max(1, n / 16));
      const int ci = rng.uniform_int(n), cj = rng.uniform_int(n);
      bool clear = true;
      for (int i = ci - bi / 2 - 1; i <= ci + bi / 2 + 1 && clear; ++i)
        for (int j = cj - bj / 2 - 1; j <= cj + bj / 2 + 1 && clear; ++j)
          if (!plan.in_bounds(i, j) ||
              plan.clearance[size_t(i) * n + j] < 0.65f)
            clear = false;
      if (!clear) continue;
      for (int i = ci - bi / 2; i <= ci + bi / 2; ++i)
        for (int j = cj - bj / 2; j <= cj + bj / 2; ++j) plan.occ[size_t(i) * n + j] = 1;
      detail::chamfer_clearance(plan);
    }

    detail::flood_fill_components(plan);
    detail::chamfer_clearance(plan);

    // Invariants: one dominant connected free region covering >= 30% of the
    // area, border occupied (constructive).
    if (plan.main_component < 0) continue;
    int main_size = 0;
    for (int idx = 0; idx < n * n; ++idx)
      main_size += plan.component[size_t(idx)] == plan.main_component;
    if (double(main_size) / double(n) / double(n) < 0.30) continue;
    return plan;
  }
  throw std::runtime_error("floorplan generation failed for seed " + std::to_string(seed));
}

// 8-connected Dijkstra distance (meters) to `goal` over cells whose clearance
// exceeds `radius`. Unreachable cells get +inf.
inline std::vector<double> grid_distance_field(const FloorPlan& plan, double gx, double gy,
                                               double radius) {
  const int n = plan.n;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(size_t(n) * n, inf);
  int gi, gj;
  plan.to_cell(gx, gy, gi, gj);
  if (!plan.in_bounds(gi, gj)) return dist;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const int gidx = gi * n + gj;
  dist[size_t(gidx)] = 0;
  pq.push({0.0, gidx});
  const int di[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!pq.empty()) {
    auto [d, idx] = pq.top();
    pq.pop();
    if (d > dist[size_t(idx)]) continue;
    const int ci = idx / n, cj = idx % n;
    for (int k = 0; k < 8; ++k) {
      const int ni = ci + di[k], nj = cj + dj[k];
      if (!plan.in_bounds(ni, nj)) continue;
      if (plan.clearance[size_t(ni) * n + nj] <= radius) continue;
      const double w = (k < 4 ? 1.0 : std::sqrt(2.0)) * plan.cell;
      const int nidx = ni * n + nj;
      if (d + w < dist[size_t(nidx)]) {
        dist[size_t(nidx)] = d + w;
        pq.push({d + w, nidx});
      }
    }
  }
  return dist;
}

// Debug export; 0 = occupied, 255 = free.
inline void write_floorplan_pgm(const FloorPlan& plan, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "P5\n" << plan.n << " " << plan.n << "\n255\n";
  // row 0 of the file is the top (max y): flip j
  for (int j = plan.n - 1; j >= 0; --j)
    for (int i = 0; i < plan.n; ++i) os.put(plan.occupied(i, j) ? char(0) : char(255));
}

}  // namespace dslam
