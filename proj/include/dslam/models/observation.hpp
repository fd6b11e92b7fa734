#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "dslam/core/param_store.hpp"
#include "dslam/geom/local_map.hpp"
#include "dslam/geom/warp.hpp"
#include "dslam/models/transition.hpp"
#include "dslam/sim/range_scan.hpp"

namespace dslam {

struct BeamModelParams {
  // Thrun-style beam model defaults.
  double z_hit = 0.8;
  double z_rand = 0.15;
  double z_max = 0.05;
  double sigma_hit = 0.2;
  double occ_threshold = 0.65;  // a cell with occupancy above this blocks rays
  int beam_stride = 2;          // score every beam_stride-th beam
  double temperature = 1.0;     // scales the summed log-likelihood
};

struct ObservationConfig {
  ModelMode mode = ModelMode::Handcrafted;
  bool composite = true;  // handcrafted: score against all selected maps at once
  BeamModelParams beam;
};

// A past local map with the pose of the current frame expressed in the past
// map's anchor frame, i.e. rel = relative(past_anchor, current_anchor).
struct PastMapRef {
  const LocalMap* map = nullptr;
  Pose2D rel;
};

namespace detail {

inline bool clip_segment(double p0, double d, double lo, double hi, double& t0, double& t1) {
  if (std::abs(d) < 1e-15) return p0 >= lo && p0 <= hi;
  double ta = (lo - p0) / d, tb = (hi - p0) / d;
  if (ta > tb) std::swap(ta, tb);
  t0 = std::max(t0, ta);
  t1 = std::min(t1, tb);
  return t0 <= t1;
}

// First blocked cell along the segment (u0,v0)->(u1,v1) in grid units over
// the map's occupancy channel; reports that cell or returns false.
inline bool raycast_occupancy(const LocalMap& map, double u0, double v0, double u1, double v1,
                              double threshold, int& hit_i, int& hit_j) {
  const int n = map.geom.n_cells;
  const double du = u1 - u0, dv = v1 - v0;
  int i = int(std::floor(u0));
  int j = int(std::floor(v0));
  const int i_end = int(std::floor(u1));
  const int j_end = int(std::floor(v1));
  const int step_i = du > 0 ? 1 : (du < 0 ? -1 : 0);
  const int step_j = dv > 0 ? 1 : (dv < 0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  double t_max_x = inf, t_delta_x = inf, t_max_y = inf, t_delta_y = inf;
  if (step_i != 0) {
    t_max_x = ((step_i > 0 ? double(i + 1) : double(i)) - u0) / du;
    t_delta_x = double(step_i) / du;
  }
  if (step_j != 0) {
    t_max_y = ((step_j > 0 ? double(j + 1) : double(j)) - v0) / dv;
    t_delta_y = double(step_j) / dv;
  }
  auto blocked = [&](int a, int b) {
    return a >= 0 && a < n && b >= 0 && b < n && map.occ(a, b) > threshold;
  };
  if (blocked(i, j)) {
    hit_i = i;
    hit_j = j;
    return true;
  }
  int guard = std::abs(i_end - i) + std::abs(j_end - j) + 2;
  while (guard-- > 0) {
    double t_entry;
    if (t_max_x < t_max_y) {
      t_entry = t_max_x;
      if (t_entry > 1.0) return false;
      i += step_i;
      t_max_x += t_delta_x;
    } else {
      t_entry = t_max_y;
      if (t_entry > 1.0) return false;
      j += step_j;
      t_max_y += t_delta_y;
    }
    if (blocked(i, j)) {
      hit_i = i;
      hit_j = j;
      return true;
    }
  }
  return false;
}

}  // namespace detail

// Scores how compatible the current observation is with past local maps under
// a hypothesized relative pose. The learned variant is a comparator CNN over
// the channel-concatenated (current, warped past) pair; the handcrafted
// variant is a beam-model log-likelihood of the current scan against the
// union of the given past maps (their obstacle sets combined).
class ObservationModel {
 public:
  ObservationConfig cfg;

  static ObservationModel handcrafted(const ObservationConfig& cfg = {}) {
    ObservationModel m;
    m.cfg = cfg;
    m.cfg.mode = ModelMode::Handcrafted;
    return m;
  }

  static ObservationModel learned(ParamStore& store, Rng& rng, int map_channels,
                                  const ObservationConfig& base = {}) {
    ObservationModel m;
    m.cfg = base;
    m.cfg.mode = ModelMode::Learned;
    const int ci = 2 * map_channels;
    store.create_dense("obs/conv1/k", Shape{3, 3, ci, 8}, ci * 9, 8 * 9, rng);
    store.create("obs/conv1/b", Shape{8});
    store.create_dense("obs/conv2/k", Shape{3, 3, 8, 8}, 8 * 9, 8 * 9, rng);
    store.create("obs/conv2/b", Shape{8});
    store.create_dense("obs/dense1/w", Shape{8, 32}, 8, 32, rng);
    store.create("obs/dense1/b", Shape{32});
    store.create_dense("obs/dense2/w", Shape{32, 1}, 32, 1, rng);
    store.create("obs/dense2/b", Shape{1});
    return m;
  }

  // Comparator over (current, already-warped past) channel stacks -> scalar.
  Tensor compare_t(ParamCtx& P, const Tensor& current, const Tensor& warped_past) const {
    Tensor x = concat({current, warped_past}, 2);
    Tensor h = relu(bias_add(conv2d(x, P("obs/conv1/k")), P("obs/conv1/b")));
    h = avg_pool2(h);
    h = relu(bias_add(conv2d(h, P("obs/conv2/k")), P("obs/conv2/b")));
    // global spatial mean per channel
    std::vector<Tensor> feats;
    feats.reserve(size_t(h.dim(2)));
    for (int c = 0; c < h.dim(2); ++c) feats.push_back(mean(slice(h, 2, c, 1)));
    Tensor feat = concat(feats, 0);
    Tensor d1 = relu(dense(feat, P("obs/dense1/w"), P("obs/dense1/b")));
    return dense(d1, P("obs/dense2/w"), P("obs/dense2/b"));
  }

  // Learned pairwise compatibility with the warp inside the gradient path.
  Tensor compatibility_t(ParamCtx& P, const Tensor& current, const Tensor& past,
                         const Tensor& rel, double cell_size) const {
    return compare_t(P, current, warp_channels(past, rel, cell_size));
  }

  // Pairwise compatibility (spec surface). Handcrafted mode needs the scan
  // that produced the current map.
  double compatibility(const ParamStore& store, const LocalMap& current, const LocalMap& past,
                       const Pose2D& rel, const RangeScan* scan = nullptr) const {
    check_same_geometry(current, past);
    if (cfg.mode == ModelMode::Learned) {
      ParamCtx P(store);
      return compatibility_t(P, current.channels, past.channels, pose_tensor(rel),
                             current.geom.cell_size)
          .value();
    }
    if (!scan) throw std::invalid_argument("handcrafted compatibility needs the current scan");
    PastMapRef ref{&past, rel};
    return beam_score(*scan, std::span<const PastMapRef>(&ref, 1));
  }

  // Beam-model log-likelihood of the scan against the union of past maps.
  // Expected ranges come from ray casts; a beam no map covers contributes the
  // all-unknown baseline term.
  double beam_score(const RangeScan& scan, std::span<const PastMapRef> past) const {
    const BeamModelParams& bm = cfg.beam;
    double score = 0;
    const double bin = past.empty() ? 0.12 : past[0].map->geom.cell_size;
    const double gauss_norm = 1.0 / (bm.sigma_hit * std::sqrt(2.0 * M_PI));

    struct MapRay {
      double cs, sn, ox, oy;  // current->past frame transform
      const LocalMap* map;
    };
    std::vector<MapRay> rays;
    rays.reserve(past.size());
    for (const auto& pm : past)
      rays.push_back({std::cos(pm.rel.theta), std::sin(pm.rel.theta), pm.rel.x, pm.rel.y, pm.map});

    for (int b = 0; b < scan.beam_count(); b += bm.beam_stride) {
      const double zb = scan.ranges[size_t(b)];
      const double phi = scan.beam_angle(b);
      const double cphi = std::cos(phi), sphi = std::sin(phi);
      double zstar = std::numeric_limits<double>::infinity();
      for (const auto& mr : rays) {
        const MapGeometry& g = mr.map->geom;
        // beam endpoint ray in the past map frame, then to grid units
        const double dxm = mr.cs * cphi - mr.sn * sphi;
        const double dym = mr.sn * cphi + mr.cs * sphi;
        const double x0 = mr.ox, y0 = mr.oy;
        const double x1 = x0 + scan.r_max * dxm, y1 = y0 + scan.r_max * dym;
        double u0, v0, u1, v1;
        g.to_grid(x0, y0, u0, v0);
        g.to_grid(x1, y1, u1, v1);
        double t0 = 0, t1 = 1;
        if (!detail::clip_segment(u0, u1 - u0, 0.0, double(g.n_cells), t0, t1)) continue;
        if (!detail::clip_segment(v0, v1 - v0, 0.0, double(g.n_cells), t0, t1)) continue;
        if (t0 > t1) continue;
        const double cu0 = u0 + t0 * (u1 - u0), cv0 = v0 + t0 * (v1 - v0);
        const double cu1 = u0 + t1 * (u1 - u0), cv1 = v0 + t1 * (v1 - v0);
        int hi, hj;
        if (detail::raycast_occupancy(*mr.map, cu0, cv0, cu1, cv1, bm.occ_threshold, hi, hj)) {
          // range to the blocking cell's center, the map's surface estimate
          double cx, cy;
          g.cell_center(hi, hj, cx, cy);
          zstar = std::min(zstar, std::hypot(cx - x0, cy - y0));
        }
      }
      const bool at_max = zb >= scan.r_max - bin;
      double p;
      if (std::isfinite(zstar)) {
        const double z = (zb - zstar) / bm.sigma_hit;
        p = bin * (bm.z_hit * gauss_norm * std::exp(-0.5 * z * z) + bm.z_rand / scan.r_max);
      } else {
        p = bin * (bm.z_hit + bm.z_rand) / scan.r_max;
      }
      if (at_max) p += bm.z_max;
      score += std::log(p);
    }
    return bm.temperature * score;
  }

  // Score of a scan with no map information at all.
  double unknown_baseline_score(const RangeScan& scan) const {
    return beam_score(scan, {});
  }
};

}  // namespace dslam
