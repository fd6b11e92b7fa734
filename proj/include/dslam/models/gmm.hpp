#pragma once

#include <array>
#include <cmath>

#include "dslam/core/autodiff.hpp"
#include "dslam/core/random.hpp"
#include "dslam/sim/motion.hpp"

namespace dslam {

constexpr int kGmmComponents = 3;
constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)

// One coordinate head in evaluated form: stds exponentiated, mixture weights
// log-normalized.
struct GmmCoeffs {
  std::array<double, kGmmComponents> mean{};
  std::array<double, kGmmComponents> std{};
  std::array<double, kGmmComponents> logw{};
};

// Raw parameter block per (action, coordinate): means[3], log_stds[3],
// mixture_logits[3].
struct GmmTable {
  double p[3][3][9] = {};

  const double* head(ActionId a, int coord) const { return p[int(a)][coord]; }
  double* head(ActionId a, int coord) { return p[int(a)][coord]; }
};

inline GmmCoeffs gmm_coeffs(const double* nine) {
  GmmCoeffs g;
  double mx = -HUGE_VAL;
  for (int c = 0; c < kGmmComponents; ++c) {
    g.mean[size_t(c)] = nine[c];
    const double ls = std::min(kLogStdMax, std::max(kLogStdMin, nine[3 + c]));
    g.std[size_t(c)] = std::exp(ls);
    mx = std::max(mx, nine[6 + c]);
  }
  double s = 0;
  for (int c = 0; c < kGmmComponents; ++c) s += std::exp(nine[6 + c] - mx);
  const double lse = mx + std::log(s);
  for (int c = 0; c < kGmmComponents; ++c) g.logw[size_t(c)] = nine[6 + c] - lse;
  return g;
}

inline double gmm_log_prob(const GmmCoeffs& g, double x) {
  double terms[kGmmComponents];
  double mx = -HUGE_VAL;
  for (int c = 0; c < kGmmComponents; ++c) {
    const double z = (x - g.mean[size_t(c)]) / g.std[size_t(c)];
    terms[c] = g.logw[size_t(c)] - 0.5 * z * z - std::log(g.std[size_t(c)]) - kHalfLog2Pi;
    mx = std::max(mx, terms[c]);
  }
  double s = 0;
  for (int c = 0; c < kGmmComponents; ++c) s += std::exp(terms[c] - mx);
  return mx + std::log(s);
}

inline int gmm_sample_component(const GmmCoeffs& g, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (int c = 0; c < kGmmComponents; ++c) {
    acc += std::exp(g.logw[size_t(c)]);
    if (u < acc) return c;
  }
  return kGmmComponents - 1;
}

inline double gmm_mixture_mean(const GmmCoeffs& g) {
  double m = 0;
  for (int c = 0; c < kGmmComponents; ++c) m += std::exp(g.logw[size_t(c)]) * g.mean[size_t(c)];
  return m;
}

// The simulator's true actuation noise as a mixture: per coordinate
// (1-w) N(mu, s) + w N(mu, slip_scale*s), third component disabled.
inline GmmTable handcrafted_gmm(const MotionNoiseModel& noise, const MotionConfig& motion,
                                double sigma_floor = 1e-6) {
  GmmTable t;
  const double disabled = -40.0;  // softmax weight ~4e-18
  for (int ai = 0; ai < kNumMoveActions; ++ai) {
    const ActionId a = ActionId(ai);
    const Pose2D nom = nominal_delta(a, motion);
    const MotionNoiseModel::Std s = noise.stds(a);
    const double nom_c[3] = {nom.x, nom.y, nom.theta};
    const double std_c[3] = {s.x, s.y, s.theta};
    for (int c = 0; c < 3; ++c) {
      double* h = t.head(a, c);
      const double sigma = std::max(sigma_floor, std_c[c]);
      h[0] = h[1] = h[2] = nom_c[c];
      h[3] = std::log(sigma);
      h[4] = std::log(std::max(sigma_floor, sigma * noise.slip_scale));
      h[5] = std::log(sigma_floor);
      if (noise.slip_weight > 0) {
        h[6] = std::log(1.0 - noise.slip_weight);
        h[7] = std::log(noise.slip_weight);
      } else {
        h[6] = 0.0;
        h[7] = disabled;
      }
      h[8] = disabled;
    }
  }
  return t;
}

// --- tape-side evaluation -------------------------------------------------

struct GmmHeadT {
  Tensor mean;     // [3]
  Tensor std;      // [3]
  Tensor log_std;  // [3] (clamped)
  Tensor logw;     // [3] log softmax of the logits
};

inline GmmHeadT gmm_head_from_tensor(const Tensor& nine) {
  GmmHeadT h;
  h.mean = slice(nine, 0, 0, 3);
  h.log_std = clamp(slice(nine, 0, 3, 3), kLogStdMin, kLogStdMax);
  h.std = exp(h.log_std);
  Tensor logits = slice(nine, 0, 6, 3);
  h.logw = sub(logits, logsumexp(logits, 0));
  return h;
}

// Sum of GMM log densities, one scalar-per-coordinate input x.
inline Tensor gmm_log_prob_t(const GmmHeadT& h, const Tensor& x /*[1]*/) {
  Tensor z = div(sub(x, h.mean), h.std);  // [3] via scalar broadcast
  Tensor terms = sub(sub(h.logw, scale(mul(z, z), 0.5)), h.log_std);
  return add_const(logsumexp(terms, 0), -kHalfLog2Pi);
}

// Reparameterized draw for a batch of particles: component indices are a
// plain categorical draw (not differentiated), the within-component draw is
// mean + std * eps so gradients flow to the selected mean and std.
inline Tensor gmm_sample_batch_t(const GmmHeadT& h, const std::vector<int>& components,
                                 const Tensor& eps /*[K]*/) {
  Tensor mean_sel = gather(h.mean, components);
  Tensor std_sel = gather(h.std, components);
  return add(mean_sel, mul(std_sel, eps));
}

inline Tensor gmm_mixture_mean_t(const GmmHeadT& h) { return sum(mul(exp(h.logw), h.mean)); }

}  // namespace dslam
