#include <gtest/gtest.h>

#include <filesystem>

#include "dslam/sim/dataset.hpp"
#include "dslam/sim/episode.hpp"
#include "dslam/sim/floorplan.hpp"
#include "dslam/sim/motion.hpp"
#include "dslam/sim/sensor.hpp"

using namespace dslam;

TEST(FloorPlan, DeterministicPerSeed) {
  FloorPlan a = generate_floorplan(7);
  FloorPlan b = generate_floorplan(7);
  ASSERT_EQ(a.n, b.n);
  EXPECT_EQ(a.occ, b.occ);
}

TEST(FloorPlan, InvariantsHoldAcrossSeeds) {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    FloorPlan plan = generate_floorplan(seed, 9.6);
    // border occupied
    for (int i = 0; i < plan.n; ++i) {
      EXPECT_TRUE(plan.occupied(i, 0));
      EXPECT_TRUE(plan.occupied(i, plan.n - 1));
      EXPECT_TRUE(plan.occupied(0, i));
      EXPECT_TRUE(plan.occupied(plan.n - 1, i));
    }
    // one connected free region covering >= 30% of the area
    int main_cells = 0;
    for (int idx = 0; idx < plan.n * plan.n; ++idx)
      main_cells += plan.component[size_t(idx)] == plan.main_component;
    EXPECT_GE(double(main_cells) / plan.n / plan.n, 0.30) << "seed " << seed;
  }
}

TEST(Sensor, NoiseFreeWallDistance) {
  // Empty room with a wall 2 m ahead of the robot.
  FloorPlan plan;
  plan.n = 100;
  plan.cell = 0.06;
  plan.seed = 0;
  plan.occ.assign(100 * 100, 0);
  for (int j = 0; j < 100; ++j)
    for (int i = 50; i < 53; ++i) plan.occ[size_t(i) * 100 + j] = 1;
  detail::flood_fill_components(plan);
  detail::chamfer_clearance(plan);

  SensorConfig cfg;
  cfg.noise_std = 0.0;
  Rng rng(1);
  Pose2D pose = make_pose(50 * 0.06 - 2.0, 3.0, 0.0);  // 2 m short of the wall
  RangeScan scan = simulate_scan(pose, plan, cfg, rng);
  EXPECT_NEAR(scan.ranges[30], 2.0, 0.5 * plan.cell);
  for (double r : scan.ranges) EXPECT_LE(r, cfg.r_max);
  EXPECT_THROW(simulate_scan(make_pose(50 * 0.06 + 0.03, 3.0, 0.0), plan, cfg, rng),
               std::invalid_argument);
}

TEST(Sensor, MultiplicativeNoiseStatistics) {
  FloorPlan plan;
  plan.n = 100;
  plan.cell = 0.06;
  plan.occ.assign(100 * 100, 0);
  for (int j = 0; j < 100; ++j) plan.occ[size_t(99) * 100 + j] = 1;
  detail::flood_fill_components(plan);
  detail::chamfer_clearance(plan);

  SensorConfig cfg;
  cfg.beams = 1;
  cfg.fov = 0.0;
  cfg.noise_std = 0.05;
  Rng rng(2);
  Pose2D pose = make_pose(2.0, 3.0, 0.0);  // wall at x=5.94, ~3.94 m ahead
  double sum = 0, sum2 = 0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    RangeScan s = simulate_scan(pose, plan, cfg, rng);
    sum += s.ranges[0];
    sum2 += s.ranges[0] * s.ranges[0];
  }
  const double mean = sum / draws;
  const double std = std::sqrt(sum2 / draws - mean * mean);
  EXPECT_NEAR(std / mean, 0.05, 0.005);
}

TEST(Motion, NominalForwardInOpenSpace) {
  FloorPlan plan = generate_floorplan(3);
  MotionNoiseModel zero;
  zero.forward = {0, 0, 0};
  zero.turn = {0, 0, 0};
  zero.slip_weight = 0;
  Rng rng(1);
  // center of the largest room: pick any deep-clearance cell
  Pose2D pose;
  for (int i = 0; i < plan.n && pose.x == 0; ++i)
    for (int j = 0; j < plan.n; ++j)
      if (plan.clearance[size_t(i) * plan.n + j] > 0.8) {
        plan.cell_center(i, j, pose.x, pose.y);
        break;
      }
  ASSERT_GT(pose.x, 0);
  auto [next, collided] = apply_action(pose, ActionId::Forward, plan, zero, rng);
  EXPECT_FALSE(collided);
  EXPECT_NEAR(distance(pose, next), 0.25, 1e-9);
  auto [turned, tc] = apply_action(pose, ActionId::TurnLeft, plan, zero, rng);
  EXPECT_FALSE(tc);
  EXPECT_NEAR(distance(pose, turned), 0.0, 1e-12);
  EXPECT_NEAR(turned.theta - pose.theta, 30.0 * M_PI / 180.0, 1e-12);
}

TEST(Motion, ForwardIntoWallTruncatesAndFlagsCollision) {
  FloorPlan plan;
  plan.n = 100;
  plan.cell = 0.06;
  plan.occ.assign(100 * 100, 0);
  for (int j = 0; j < 100; ++j)
    for (int i = 60; i < 100; ++i) plan.occ[size_t(i) * 100 + j] = 1;
  detail::flood_fill_components(plan);
  detail::chamfer_clearance(plan);

  MotionNoiseModel zero;
  zero.forward = {0, 0, 0};
  zero.turn = {0, 0, 0};
  zero.slip_weight = 0;
  Rng rng(4);
  // Stand almost touching the wall (robot radius 0.18).
  const double wall_x = 60 * 0.06;
  Pose2D pose = make_pose(wall_x - 0.18 - 0.015, 3.0, 0.0);
  ASSERT_TRUE(plan.disc_free(pose.x, pose.y, 0.18));
  auto [next, collided] = apply_action(pose, ActionId::Forward, plan, zero, rng);
  EXPECT_TRUE(collided);
  EXPECT_LT(distance(pose, next), 0.03);
}

TEST(Motion, TurnKeepsPositionUpToNoise) {
  FloorPlan plan = generate_floorplan(5);
  MotionNoiseModel noise;  // default: turn position stds are zero
  Rng rng(9);
  Pose2D pose;
  bool found = false;
  for (int i = 0; i < plan.n && !found; ++i)
    for (int j = 0; j < plan.n && !found; ++j)
      if (plan.clearance[size_t(i) * plan.n + j] > 0.6) {
        plan.cell_center(i, j, pose.x, pose.y);
        found = true;
      }
  for (int k = 0; k < 50; ++k) {
    auto [next, collided] = apply_action(pose, ActionId::TurnRight, plan, noise, rng);
    EXPECT_DOUBLE_EQ(next.x, pose.x);
    EXPECT_DOUBLE_EQ(next.y, pose.y);
    EXPECT_FALSE(collided);
  }
}

TEST(Episode, ExpertDecreasesDistanceMonotonically) {
  FloorPlan plan = generate_floorplan(11);
  EpisodeConfig cfg;
  cfg.sensor.noise_std = 0.0;
  cfg.noise.forward = {0, 0, 0};
  cfg.noise.turn = {0, 0, 0};
  cfg.noise.slip_weight = 0.0;
  Rng rng(21);
  auto [start, goal] = sample_start_goal(plan, rng, cfg.motion, 2.0, 6.0);
  Policy expert = make_expert_policy(plan, goal, cfg.motion);
  EpisodeRecord ep = generate_episode(plan, expert, start, goal, "traj_expert", cfg, rng);
  ASSERT_GT(ep.length(), 3);

  const auto field = grid_distance_field(plan, goal.x, goal.y, cfg.motion.robot_radius);
  auto path_dist = [&](const Pose2D& p) {
    int i, j;
    plan.to_cell(p.x, p.y, i, j);
    return field[size_t(i) * plan.n + j];
  };
  // Distance-to-goal decreases across forward moves (turns keep it constant).
  double prev = path_dist(start);
  double last_forward = prev;
  for (const auto& s : ep.steps) {
    const double d = path_dist(s.pose);
    if (s.action == ActionId::Forward) {
      EXPECT_LT(d, last_forward + 1e-9);
      last_forward = d;
    }
    prev = d;
  }
  // and the expert ends near the goal
  EXPECT_LT(path_dist(ep.steps.back().pose), 0.4);
}

TEST(Episode, ExpertRandomScheduleIsExact) {
  for (int t = 0; t < 300; ++t) {
    const bool expected = (t % 70) < 30;
    EXPECT_EQ(expert_random_is_expert_step(t), expected);
  }
}

TEST(Episode, UnreachableGoalThrows) {
  FloorPlan plan = generate_floorplan(13);
  EpisodeConfig cfg;
  Rng rng(5);
  // goal inside the border wall is unreachable
  Pose2D start;
  for (int i = 0; i < plan.n; ++i)
    for (int j = 0; j < plan.n; ++j)
      if (plan.clearance[size_t(i) * plan.n + j] > 0.5) {
        plan.cell_center(i, j, start.x, start.y);
        i = plan.n;
        break;
      }
  Pose2D goal = make_pose(0.03, 0.03, 0);
  Policy expert = make_expert_policy(plan, goal, cfg.motion);
  EXPECT_THROW(generate_episode(plan, expert, start, goal, "traj_expert", cfg, rng),
               std::invalid_argument);
}

TEST(Episode, TruePosesStayInFreeSpace) {
  FloorPlan plan = generate_floorplan(17);
  EpisodeConfig cfg;
  cfg.max_steps = 120;
  Rng rng(31);
  auto [start, goal] = sample_start_goal(plan, rng, cfg.motion);
  Policy policy = make_expert_random_policy(make_expert_policy(plan, goal, cfg.motion));
  EpisodeRecord ep = generate_episode(plan, policy, start, goal, "traj_exp_rand", cfg, rng);
  ASSERT_GT(ep.length(), 50);
  for (const auto& s : ep.steps) EXPECT_FALSE(plan.occupied_at(s.pose.x, s.pose.y));
}

TEST(Dataset, RoundTripIsExact) {
  namespace fs = std::filesystem;
  FloorPlan plan = generate_floorplan(19);
  EpisodeConfig cfg;
  cfg.max_steps = 40;
  Rng rng(77);
  std::vector<EpisodeRecord> eps;
  for (int k = 0; k < 3; ++k) {
    auto [start, goal] = sample_start_goal(plan, rng, cfg.motion);
    Policy policy = make_expert_policy(plan, goal, cfg.motion);
    eps.push_back(generate_episode(plan, policy, start, goal, "traj_expert", cfg, rng));
  }
  const std::string path = (fs::temp_directory_path() / "dslam_ds_test.jsonl").string();
  write_dataset(path, eps, /*with_cache=*/true);
  auto loaded = read_dataset(path);
  ASSERT_EQ(loaded.size(), eps.size());
  for (size_t e = 0; e < eps.size(); ++e) {
    EXPECT_EQ(loaded[e].generator, eps[e].generator);
    EXPECT_EQ(loaded[e].start_pose, eps[e].start_pose);
    ASSERT_EQ(loaded[e].steps.size(), eps[e].steps.size());
    for (size_t s = 0; s < eps[e].steps.size(); ++s) {
      EXPECT_EQ(loaded[e].steps[s].action, eps[e].steps[s].action);
      EXPECT_EQ(loaded[e].steps[s].pose, eps[e].steps[s].pose);
      EXPECT_EQ(loaded[e].steps[s].collided, eps[e].steps[s].collided);
      EXPECT_EQ(loaded[e].steps[s].scan.ranges, eps[e].steps[s].scan.ranges);
    }
  }
  // cache path equals jsonl path field-for-field
  auto cached = read_dataset(path, /*use_cache=*/true);
  ASSERT_EQ(cached.size(), loaded.size());
  for (size_t e = 0; e < cached.size(); ++e) {
    EXPECT_EQ(cached[e].start_scan.ranges, loaded[e].start_scan.ranges);
    for (size_t s = 0; s < cached[e].steps.size(); ++s)
      EXPECT_EQ(cached[e].steps[s].scan.ranges, loaded[e].steps[s].scan.ranges);
  }
  fs::remove(path);
  fs::remove(dataset::cache_path(path));
}

TEST(Dataset, EmptyFileGivesEmptyList) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "dslam_ds_empty.jsonl").string();
  { std::ofstream os(path); }
  EXPECT_TRUE(read_dataset(path).empty());
  fs::remove(path);
}

TEST(Dataset, CorruptedLineReportsLineNumber) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "dslam_ds_bad.jsonl").string();
  {
    std::ofstream os(path);
    os << "{\"schema_version\":1,\"floorplan_seed\":0,\"generator\":\"traj_expert\","
          "\"sensor\":{\"fov\":1.0,\"r_max\":10.0,\"r_min\":0.1},"
          "\"start_pose\":[0,0,0],\"goal\":[1,1],\"start_scan\":[],\"steps\":[]}\n";
    os << "{this is not json\n";
  }
  try {
    read_dataset(path);
    FAIL() << "expected throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  fs::remove(path);
}

TEST(Dataset, SchemaVersionMismatchNamesBothVersions) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "dslam_ds_ver.jsonl").string();
  {
    std::ofstream os(path);
    os << "{\"schema_version\":42}\n";
  }
  try {
    read_dataset(path);
    FAIL() << "expected throw";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("42"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1"), std::string::npos) << msg;
  }
  fs::remove(path);
}
