#pragma once

#include <string>

#include "dslam/core/param_store.hpp"
#include "dslam/geom/local_map.hpp"
#include "dslam/models/mode.hpp"
#include "dslam/geom/scan_projection.hpp"
#include "dslam/sim/range_scan.hpp"

namespace dslam {

struct MappingConfig {
  ModelMode mode = ModelMode::Handcrafted;
  bool occupancy = true;  // predict an occupancy channel
  int n_latent = 0;       // latent feature channels (0, 4, 8 or 16)
  MapGeometry geom;
};

// Produces the local map for one observation. Handcrafted mode is the
// geometric inverse sensor model; learned mode refines the projection with a
// small conv net per channel group (occupancy trained by per-cell
// cross-entropy and frozen afterwards; latent channels trained end-to-end).
class MappingModel {
 public:
  MappingConfig cfg;

  static MappingModel handcrafted(const MapGeometry& geom) {
    MappingModel m;
    m.cfg.mode = ModelMode::Handcrafted;
    m.cfg.geom = geom;
    m.cfg.occupancy = true;
    m.cfg.n_latent = 0;
    return m;
  }

  static MappingModel learned(ParamStore& store, Rng& rng, const MappingConfig& cfg) {
    MappingModel m;
    m.cfg = cfg;
    m.cfg.mode = ModelMode::Learned;
    if (cfg.occupancy) {
      store.create_dense("map/occ/conv1/k", Shape{3, 3, 2, 8}, 2 * 9, 8 * 9, rng);
      store.create("map/occ/conv1/b", Shape{8});
      store.create_dense("map/occ/conv2/k", Shape{3, 3, 8, 1}, 8 * 9, 9, rng);
      store.create("map/occ/conv2/b", Shape{1});
    }
    if (cfg.n_latent > 0) {
      store.create_dense("map/lat/conv1/k", Shape{3, 3, 2, 8}, 2 * 9, 8 * 9, rng);
      store.create("map/lat/conv1/b", Shape{8});
      store.create_dense("map/lat/conv2/k", Shape{3, 3, 8, cfg.n_latent}, 8 * 9,
                         cfg.n_latent * 9, rng);
      store.create("map/lat/conv2/b", Shape{cfg.n_latent});
    }
    return m;
  }

  int n_channels() const { return (cfg.occupancy ? 1 : 0) + 1 + cfg.n_latent; }

  // Occupancy logits from the geometric projection (tape-aware); exposed
  // separately so pretraining can apply a cross-entropy on the logits.
  Tensor occupancy_logits_t(ParamCtx& P, const Tensor& projected) const {
    Tensor h = relu(bias_add(conv2d(projected, P("map/occ/conv1/k")), P("map/occ/conv1/b")));
    return bias_add(conv2d(h, P("map/occ/conv2/k")), P("map/occ/conv2/b"));
  }

  Tensor latent_t(ParamCtx& P, const Tensor& projected) const {
    Tensor h = relu(bias_add(conv2d(projected, P("map/lat/conv1/k")), P("map/lat/conv1/b")));
    return bias_add(conv2d(h, P("map/lat/conv2/k")), P("map/lat/conv2/b"));
  }

  // Full prediction. In handcrafted mode this is exactly the geometric
  // projection. ParamCtx carries the tape when gradients are wanted.
  LocalMap predict_t(ParamCtx& P, const RangeScan& scan) const {
    LocalMap proj = scan_to_local_map(scan, cfg.geom);
    if (cfg.mode == ModelMode::Handcrafted) return proj;

    LocalMap out;
    out.geom = cfg.geom;
    out.occ_channel = cfg.occupancy ? 0 : -1;
    out.vis_channel = cfg.occupancy ? 1 : 0;
    out.n_latent = cfg.n_latent;
    Tensor vis = slice(proj.channels, 2, proj.vis_channel, 1);
    std::vector<Tensor> chans;
    if (cfg.occupancy) chans.push_back(sigmoid(occupancy_logits_t(P, proj.channels)));
    chans.push_back(vis);
    if (cfg.n_latent > 0) chans.push_back(latent_t(P, proj.channels));
    out.channels = chans.size() == 1 ? chans[0] : concat(chans, 2);
    return out;
  }

  LocalMap predict(const ParamStore& store, const RangeScan& scan) const {
    ParamCtx P(store);
    return predict_t(P, scan);
  }

  static void freeze_occupancy(ParamStore& store) { store.freeze_prefix("map/occ"); }
};

}  // namespace dslam
