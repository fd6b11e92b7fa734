#pragma once

#include <array>
#include <string>
#include <vector>

#include "dslam/core/param_store.hpp"
#include "dslam/models/gmm.hpp"
#include "dslam/models/mode.hpp"
#include "dslam/sim/range_scan.hpp"

namespace dslam {

// One-hot action plus a summary of per-beam range differences between the
// current and previous scans (mean, min, max).
inline Tensor transition_feature(ActionId action, const RangeScan& cur, const RangeScan& prev) {
  Tensor f(Shape{6});
  f.at(int(action)) = 1.0;
  const int n = std::min(cur.beam_count(), prev.beam_count());
  double mean = 0, mn = 0, mx = 0;
  if (n > 0) {
    mn = HUGE_VAL;
    mx = -HUGE_VAL;
    for (int b = 0; b < n; ++b) {
      const double d = cur.ranges[size_t(b)] - prev.ranges[size_t(b)];
      mean += d;
      mn = std::min(mn, d);
      mx = std::max(mx, d);
    }
    mean /= n;
  }
  f.at(3) = mean;
  f.at(4) = mn;
  f.at(5) = mx;
  return f;
}

// Probabilistic model of relative motion per action: a 3-component Gaussian
// mixture per coordinate. The learned variant runs a small dense network on
// the transition feature and adds per-head offsets to per-action base
// parameters; the handcrafted variant is pinned to the simulator's true
// actuation noise and has no trainable parameters.
class TransitionModel {
 public:
  static constexpr const char* kActionTag[3] = {"fwd", "tl", "tr"};
  static constexpr const char* kCoordTag[3] = {"x", "y", "th"};
  static constexpr int kFeatureDim = 6;
  static constexpr int kHidden = 64;

  ModelMode mode = ModelMode::Handcrafted;
  GmmTable handcrafted_table;  // used in handcrafted mode

  static TransitionModel handcrafted(const MotionNoiseModel& noise, const MotionConfig& motion) {
    TransitionModel m;
    m.mode = ModelMode::Handcrafted;
    m.handcrafted_table = handcrafted_gmm(noise, motion);
    return m;
  }

  // Creates parameters under "trans/". Base parameters start at the nominal
  // action deltas; head weights are scaled down so offsets start small.
  static TransitionModel learned(ParamStore& store, Rng& rng, const MotionConfig& motion) {
    TransitionModel m;
    m.mode = ModelMode::Learned;
    store.create_dense("trans/feature/w", Shape{kFeatureDim, kHidden}, kFeatureDim, kHidden, rng);
    store.create("trans/feature/b", Shape{kHidden});
    store.create_dense("trans/trunk/w", Shape{kHidden, kHidden}, kHidden, kHidden, rng);
    store.create("trans/trunk/b", Shape{kHidden});
    for (int a = 0; a < kNumMoveActions; ++a) {
      const Pose2D nom = nominal_delta(ActionId(a), motion);
      const double nom_c[3] = {nom.x, nom.y, nom.theta};
      for (int c = 0; c < 3; ++c) {
        const std::string prefix = head_prefix(ActionId(a), c);
        Tensor& w = store.create_dense(prefix + "/w", Shape{kHidden, 9}, kHidden, 9, rng);
        for (int i = 0; i < w.numel(); ++i) w.data()[i] *= 0.1;
        store.create(prefix + "/b", Shape{9});
        Tensor& base = store.create(base_name(ActionId(a), c), Shape{9});
        for (int k = 0; k < 3; ++k) {
          base.at(k) = nom_c[c];
          base.at(3 + k) = std::log(0.05);
          base.at(6 + k) = 0.0;
        }
      }
    }
    return m;
  }

  static std::string head_prefix(ActionId a, int coord) {
    return std::string("trans/head/") + kActionTag[int(a)] + "_" + kCoordTag[coord];
  }
  static std::string base_name(ActionId a, int coord) {
    return std::string("trans/base/") + kActionTag[int(a)] + "_" + kCoordTag[coord];
  }

  // During joint finetuning only the dense trunk stays trainable; the feature
  // layer and the mixture heads (including base parameters) are frozen.
  static void freeze_for_finetune(ParamStore& store) {
    store.freeze_prefix("trans/feature");
    store.freeze_prefix("trans/head");
    store.freeze_prefix("trans/base");
  }

  // Per-coordinate heads for one action (tape-aware through ParamCtx).
  std::array<GmmHeadT, 3> heads_t(ParamCtx& P, const Tensor& feature, ActionId action) const {
    std::array<GmmHeadT, 3> out;
    if (mode == ModelMode::Handcrafted) {
      for (int c = 0; c < 3; ++c) {
        Tensor nine(Shape{9});
        std::copy(handcrafted_table.head(action, c), handcrafted_table.head(action, c) + 9,
                  nine.data());
        out[size_t(c)] = gmm_head_from_tensor(nine);
      }
      return out;
    }
    Tensor h1 = relu(dense(feature, P("trans/feature/w"), P("trans/feature/b")));
    Tensor h2 = relu(dense(h1, P("trans/trunk/w"), P("trans/trunk/b")));
    for (int c = 0; c < 3; ++c) {
      Tensor nine = add(dense(h2, P(head_prefix(action, c) + "/w"), P(head_prefix(action, c) + "/b")),
                        P(base_name(action, c)));
      out[size_t(c)] = gmm_head_from_tensor(nine);
    }
    return out;
  }

  // Plain coefficients for the sampling fast path.
  std::array<GmmCoeffs, 3> coeffs(const ParamStore& store, const Tensor& feature,
                                  ActionId action) const {
    std::array<GmmCoeffs, 3> out;
    if (mode == ModelMode::Handcrafted) {
      for (int c = 0; c < 3; ++c) out[size_t(c)] = gmm_coeffs(handcrafted_table.head(action, c));
      return out;
    }
    ParamCtx P(store);
    auto hs = heads_t(P, feature, action);
    for (int c = 0; c < 3; ++c) {
      GmmCoeffs g;
      for (int k = 0; k < kGmmComponents; ++k) {
        g.mean[size_t(k)] = hs[size_t(c)].mean.at(k);
        g.std[size_t(k)] = hs[size_t(c)].std.at(k);
        g.logw[size_t(k)] = hs[size_t(c)].logw.at(k);
      }
      out[size_t(c)] = g;
    }
    return out;
  }

  // Sum over the three coordinates of GMM log densities.
  double log_prob(const ParamStore& store, const Tensor& feature, ActionId action,
                  const Pose2D& delta) const {
    auto cs = coeffs(store, feature, action);
    return gmm_log_prob(cs[0], delta.x) + gmm_log_prob(cs[1], delta.y) +
           gmm_log_prob(cs[2], wrap_pi(delta.theta));
  }

  Tensor log_prob_t(ParamCtx& P, const Tensor& feature, ActionId action,
                    const Pose2D& delta) const {
    auto hs = heads_t(P, feature, action);
    const double d[3] = {delta.x, delta.y, wrap_pi(delta.theta)};
    Tensor total = Tensor::scalar(0.0);
    for (int c = 0; c < 3; ++c)
      total = add(total, gmm_log_prob_t(hs[size_t(c)], Tensor::scalar(d[c])));
    return total;
  }

  Pose2D sample(const ParamStore& store, const Tensor& feature, ActionId action,
                Rng& rng) const {
    auto cs = coeffs(store, feature, action);
    double d[3];
    for (int c = 0; c < 3; ++c) {
      const int comp = gmm_sample_component(cs[size_t(c)], rng);
      d[c] = cs[size_t(c)].mean[size_t(comp)] + cs[size_t(c)].std[size_t(comp)] * rng.normal();
    }
    return {d[0], d[1], d[2]};
  }

  // Accumulating these means over steps gives the learned-visual-odometry
  // baseline trajectory.
  Pose2D mean_delta(const ParamStore& store, const Tensor& feature, ActionId action) const {
    auto cs = coeffs(store, feature, action);
    return {gmm_mixture_mean(cs[0]), gmm_mixture_mean(cs[1]), gmm_mixture_mean(cs[2])};
  }
};

}  // namespace dslam
