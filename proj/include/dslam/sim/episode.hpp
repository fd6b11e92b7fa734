#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dslam/core/random.hpp"
#include "dslam/geom/pose.hpp"
#include "dslam/sim/floorplan.hpp"
#include "dslam/sim/motion.hpp"
#include "dslam/sim/sensor.hpp"

namespace dslam {

struct StepRecord {
  ActionId action = ActionId::Forward;  // action that led to this step's pose
  Pose2D pose;                          // true world pose after the action
  RangeScan scan;                       // observed at `pose`
  bool collided = false;
};

struct EpisodeRecord {
  uint64_t floorplan_seed = 0;
  std::string generator;  // traj_expert | traj_exp_rand | traj_nav
  Pose2D start_pose;      // world frame
  RangeScan start_scan;
  Pose2D goal;            // world frame, theta unused
  std::vector<StepRecord> steps;

  int length() const { return int(steps.size()); }

  // True trajectory in the filter frame (start pose = origin), s_0..s_T.
  std::vector<Pose2D> true_trajectory() const {
    std::vector<Pose2D> out;
    out.reserve(steps.size() + 1);
    out.push_back(Pose2D::identity());
    for (const auto& s : steps) out.push_back(relative(start_pose, s.pose));
    return out;
  }

  Pose2D goal_relative() const { return relative(start_pose, {goal.x, goal.y, 0.0}); }
};

struct EpisodeConfig {
  SensorConfig sensor;
  MotionNoiseModel noise;
  MotionConfig motion;
  int max_steps = 200;
};

struct PolicyContext {
  const FloorPlan& plan;
  Pose2D pose;  // true world pose
  Pose2D goal;
  const RangeScan& scan;
  int t = 0;
};

using Policy = std::function<ActionId(const PolicyContext&, Rng&)>;

// Grid-shortest-path expert: descends an 8-connected distance field,
// turning when the heading error exceeds just over half the turn angle.
inline Policy make_expert_policy(const FloorPlan& plan, const Pose2D& goal,
                                 const MotionConfig& motion, double stop_distance = 0.25) {
  auto field = std::make_shared<std::vector<double>>(
      grid_distance_field(plan, goal.x, goal.y, motion.robot_radius));
  const double tol = 0.55 * motion.turn_angle;
  return [field, motion, stop_distance, tol](const PolicyContext& ctx, Rng&) -> ActionId {
    const FloorPlan& plan = ctx.plan;
    int ci, cj;
    plan.to_cell(ctx.pose.x, ctx.pose.y, ci, cj);
    const auto& d = *field;
    const double here = d[size_t(ci) * plan.n + cj];
    if (!std::isfinite(here)) return ActionId::Stop;  // off the reachable set
    if (here < stop_distance) return ActionId::Stop;

    // Follow the steepest descent a few cells out for a stable heading.
    int ti = ci, tj = cj;
    for (int hop = 0; hop < 4; ++hop) {
      int bi = ti, bj = tj;
      double best = d[size_t(ti) * plan.n + tj];
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int ni = ti + di, nj = tj + dj;
          if (!plan.in_bounds(ni, nj)) continue;
          const double v = d[size_t(ni) * plan.n + nj];
          if (v < best) {
            best = v;
            bi = ni;
            bj = nj;
          }
        }
      if (bi == ti && bj == tj) break;
      ti = bi;
      tj = bj;
    }
    if (ti == ci && tj == cj) return ActionId::Stop;
    double tx, ty;
    plan.cell_center(ti, tj, tx, ty);
    const double desired = std::atan2(ty - ctx.pose.y, tx - ctx.pose.x);
    const double err = wrap_pi(desired - ctx.pose.theta);
    if (err > tol) return ActionId::TurnLeft;
    if (err < -tol) return ActionId::TurnRight;
    return ActionId::Forward;
  };
}

// Schedule of the mixed generator: 30 expert steps then 40 random ones.
inline bool expert_random_is_expert_step(int t) { return (t % 70) < 30; }

inline Policy make_expert_random_policy(Policy expert) {
  return [expert = std::move(expert)](const PolicyContext& ctx, Rng& rng) -> ActionId {
    if (expert_random_is_expert_step(ctx.t)) {
      const ActionId a = expert(ctx, rng);
      if (a != ActionId::Stop) return a;
    }
    return ActionId(rng.uniform_int(kNumMoveActions));
  };
}

// Start and goal in the main free component with a grid-path length inside
// [min_path, max_path].
inline std::pair<Pose2D, Pose2D> sample_start_goal(const FloorPlan& plan, Rng& rng,
                                                   const MotionConfig& motion,
                                                   double min_path = 2.0, double max_path = 9.0) {
  const double margin = motion.robot_radius + 0.07;
  for (int attempt = 0; attempt < 2000; ++attempt) {
    const double sx = rng.uniform(0, plan.extent());
    const double sy = rng.uniform(0, plan.extent());
    const double gx = rng.uniform(0, plan.extent());
    const double gy = rng.uniform(0, plan.extent());
    if (!plan.disc_free(sx, sy, margin) || !plan.disc_free(gx, gy, margin)) continue;
    if (!plan.same_component(sx, sy, gx, gy)) continue;
    const auto field = grid_distance_field(plan, gx, gy, motion.robot_radius);
    int si, sj;
    plan.to_cell(sx, sy, si, sj);
    const double d = field[size_t(si) * plan.n + sj];
    if (!std::isfinite(d) || d < min_path || d > max_path) continue;
    const double theta = rng.uniform(-M_PI, M_PI);
    return {make_pose(sx, sy, theta), make_pose(gx, gy, 0)};
  }
  throw std::runtime_error("sample_start_goal: no valid start/goal pair found");
}

inline EpisodeRecord generate_episode(const FloorPlan& plan, const Policy& policy,
                                      const Pose2D& start, const Pose2D& goal,
                                      const std::string& generator_tag,
                                      const EpisodeConfig& cfg, Rng& rng) {
  // Unreachable goals are a caller error; fail at generation time.
  {
    const auto field = grid_distance_field(plan, goal.x, goal.y, cfg.motion.robot_radius);
    int si, sj;
    plan.to_cell(start.x, start.y, si, sj);
    if (!plan.in_bounds(si, sj) || !std::isfinite(field[size_t(si) * plan.n + sj]))
      throw std::invalid_argument("generate_episode: goal unreachable from start");
  }

  EpisodeRecord ep;
  ep.floorplan_seed = plan.seed;
  ep.generator = generator_tag;
  ep.start_pose = start;
  ep.goal = goal;
  ep.start_scan = simulate_scan(start, plan, cfg.sensor, rng);

  Pose2D pose = start;
  RangeScan scan = ep.start_scan;
  for (int t = 0; t < cfg.max_steps; ++t) {
    const ActionId a = policy({plan, pose, goal, scan, t}, rng);
    if (a == ActionId::Stop) break;
    auto [next, collided] = apply_action(pose, a, plan, cfg.noise, rng, cfg.motion);
    pose = next;
    scan = simulate_scan(pose, plan, cfg.sensor, rng);
    ep.steps.push_back({a, pose, scan, collided});
  }
  return ep;
}

}  // namespace dslam
