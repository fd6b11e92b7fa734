#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "dslam/core/random.hpp"
#include "dslam/geom/pose.hpp"
#include "dslam/sim/floorplan.hpp"

namespace dslam {

enum class ActionId : uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };

constexpr int kNumMoveActions = 3;  // Stop terminates episodes, never sampled

inline const char* action_name(ActionId a) {
  switch (a) {
    case ActionId::Forward: return "Forward";
    case ActionId::TurnLeft: return "TurnLeft";
    case ActionId::TurnRight: return "TurnRight";
    case ActionId::Stop: return "Stop";
  }
  return "?";
}

inline ActionId action_from_name(const std::string& s) {
  if (s == "Forward") return ActionId::Forward;
  if (s == "TurnLeft") return ActionId::TurnLeft;
  if (s == "TurnRight") return ActionId::TurnRight;
  if (s == "Stop") return ActionId::Stop;
  throw std::invalid_argument("unknown action: " + s);
}

struct MotionConfig {
  double forward_dist = 0.25;
  double turn_angle = 30.0 * M_PI / 180.0;
  double robot_radius = 0.18;
};

inline Pose2D nominal_delta(ActionId a, const MotionConfig& cfg = {}) {
  switch (a) {
    case ActionId::Forward: return {cfg.forward_dist, 0.0, 0.0};
    case ActionId::TurnLeft: return {0.0, 0.0, cfg.turn_angle};
    case ActionId::TurnRight: return {0.0, 0.0, -cfg.turn_angle};
    case ActionId::Stop: return {};
  }
  return {};
}

// Per-action Gaussian noise with an independent per-coordinate slip mixture
// (with probability slip_weight the coordinate's std is scaled slip_scale x).
struct MotionNoiseModel {
  struct Std {
    double x = 0, y = 0, theta = 0;
  };
  Std forward{0.02, 0.01, 1.0 * M_PI / 180.0};
  Std turn{0.0, 0.0, 2.0 * M_PI / 180.0};
  double slip_weight = 0.05;
  double slip_scale = 3.0;

  Std stds(ActionId a) const { return a == ActionId::Forward ? forward : turn; }

  Pose2D sample(ActionId a, Rng& rng) const {
    const Std s = stds(a);
    auto draw = [&](double std) {
      if (std <= 0) return 0.0;
      const double scale = rng.uniform() < slip_weight ? slip_scale : 1.0;
      return rng.normal(0.0, std * scale);
    };
    return {draw(s.x), draw(s.y), draw(s.theta)};
  }
};

// Nominal motion plus sampled noise; forward translation is truncated at the
// first obstacle contact along the motion segment (circular body).
inline std::pair<Pose2D, bool> apply_action(const Pose2D& pose, ActionId action,
                                            const FloorPlan& plan,
                                            const MotionNoiseModel& noise, Rng& rng,
                                            const MotionConfig& cfg = {}) {
  if (action == ActionId::Stop) return {pose, false};
  const Pose2D nom = nominal_delta(action, cfg);
  const Pose2D eps = noise.sample(action, rng);
  const Pose2D delta{nom.x + eps.x, nom.y + eps.y, nom.theta + eps.theta};
  const Pose2D target = compose(pose, delta);

  const double len = std::hypot(target.x - pose.x, target.y - pose.y);
  double reach = 1.0;
  bool collided = false;
  if (len > 1e-12) {
    const double step = 0.01 / len;  // 1 cm contact resolution
    double t = 0.0;
    double last_free = 0.0;
    while (t < 1.0) {
      t = std::min(1.0, t + step);
      const double x = pose.x + t * (target.x - pose.x);
      const double y = pose.y + t * (target.y - pose.y);
      if (!plan.disc_free(x, y, cfg.robot_radius)) {
        collided = true;
        break;
      }
      last_free = t;
    }
    reach = collided ? last_free : 1.0;
  }
  Pose2D out{pose.x + reach * (target.x - pose.x), pose.y + reach * (target.y - pose.y),
             wrap_pi(target.theta)};
  return {out, collided};
}

}  // namespace dslam
