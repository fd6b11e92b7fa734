#include <gtest/gtest.h>

#include "dslam/geom/overlap.hpp"
#include "dslam/models/gmm.hpp"
#include "dslam/models/mapping.hpp"
#include "dslam/models/observation.hpp"
#include "dslam/models/suite.hpp"
#include "dslam/models/transition.hpp"
#include "dslam/sim/episode.hpp"
#include "dslam/sim/floorplan.hpp"
#include "dslam/sim/sensor.hpp"
#include "fd_check.hpp"

using namespace dslam;

namespace {

// Simpson quadrature of f over [a, b].
template <typename F>
double quad(F&& f, double a, double b, int n = 4000) {
  double acc = f(a) + f(b);
  const double h = (b - a) / n;
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

GmmCoeffs single_component(double mu, double log_std) {
  double nine[9] = {mu, 0, 0, log_std, 0, 0, 0, -1e9, -1e9};
  return gmm_coeffs(nine);
}

RangeScan scan_in_plan(const FloorPlan& plan, const Pose2D& pose, uint64_t seed,
                       double noise = 0.0) {
  SensorConfig cfg;
  cfg.noise_std = noise;
  Rng rng(seed);
  return simulate_scan(pose, plan, cfg, rng);
}

Pose2D roomy_pose(const FloorPlan& plan, double clearance = 0.7) {
  for (int i = 0; i < plan.n; ++i)
    for (int j = 0; j < plan.n; ++j)
      if (plan.clearance[size_t(i) * plan.n + j] > clearance) {
        double x, y;
        plan.cell_center(i, j, x, y);
        return make_pose(x, y, 0.4);
      }
  throw std::runtime_error("no roomy pose");
}

}  // namespace

TEST(Gmm, StandardNormalAtModeGivesHalfLog2Pi) {
  GmmCoeffs g = single_component(0.0, 0.0);
  EXPECT_NEAR(gmm_log_prob(g, 0.0), -0.9189385332046727, 1e-12);
}

TEST(Gmm, DensityIntegratesToOne) {
  // handcrafted forward-x head: slip mixture around 0.25
  MotionNoiseModel noise;
  MotionConfig motion;
  GmmTable t = handcrafted_gmm(noise, motion);
  for (int c = 0; c < 3; ++c) {
    GmmCoeffs g = gmm_coeffs(t.head(ActionId::Forward, c));
    const double span = 6.0 * g.std[1];  // covers the widest (slip) component
    const double mass =
        quad([&](double x) { return std::exp(gmm_log_prob(g, x)); }, g.mean[0] - span,
             g.mean[0] + span);
    EXPECT_NEAR(mass, 1.0, 1e-3) << "coord " << c;
  }
}

TEST(Gmm, HandcraftedLogProbMatchesSimulatorEntropy) {
  // Average log-density of simulator draws must match the negated
  // differential entropy (computed by quadrature) of the same mixture.
  MotionNoiseModel noise;
  MotionConfig motion;
  GmmTable t = handcrafted_gmm(noise, motion);
  GmmCoeffs g = gmm_coeffs(t.head(ActionId::Forward, 0));
  Rng rng(123);
  const int n = 100000;
  double avg = 0;
  for (int k = 0; k < n; ++k) {
    // the simulator's slip process, per coordinate
    const double std = noise.forward.x * (rng.uniform() < noise.slip_weight ? noise.slip_scale : 1.0);
    const double x = motion.forward_dist + rng.normal(0.0, std);
    avg += gmm_log_prob(g, x);
  }
  avg /= n;
  const double span = 7.0 * g.std[1];
  const double neg_entropy =
      quad([&](double x) { const double lp = gmm_log_prob(g, x); return std::exp(lp) * lp; },
           g.mean[0] - span, g.mean[0] + span);
  EXPECT_NEAR(avg, neg_entropy, 0.05);
}

TEST(Gmm, DegenerateSigmaSamplesEqualMean) {
  GmmCoeffs g = single_component(0.37, -20.0);
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const int c = gmm_sample_component(g, rng);
    const double x = g.mean[size_t(c)] + g.std[size_t(c)] * rng.normal();
    EXPECT_NEAR(x, 0.37, 1e-8);
  }
}

TEST(Gmm, SampleStatisticsMatchParameters) {
  GmmCoeffs g = single_component(1.5, std::log(0.4));
  Rng rng(17);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int k = 0; k < n; ++k) {
    const double x = g.mean[0] + g.std[0] * rng.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double std = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, 1.5, 0.01 * 1.5);
  EXPECT_NEAR(std, 0.4, 0.01 * 0.4 + 0.003);
}

TEST(Gmm, ReparameterizedSampleHasUnitMeanGradient) {
  Tape tape;
  Tensor nine = tape.leaf(
      Tensor::vector({0.2, 0.0, 0.0, std::log(0.3), 0.0, 0.0, 0.0, -1e9, -1e9}), "nine");
  GmmHeadT h = gmm_head_from_tensor(nine);
  Tensor eps = Tensor::vector({0.73});
  Tensor sample = gmm_sample_batch_t(h, {0}, eps);
  tape.backward(sample);
  Tensor g = tape.grad(nine);
  EXPECT_NEAR(g.at(0), 1.0, 1e-12);            // d sample / d mean[0]
  EXPECT_NEAR(g.at(3), 0.73 * 0.3, 1e-12);     // d sample / d log_std[0] = eps * std
}

TEST(Gmm, LogProbMaximizedAtSingleComponentMode) {
  GmmCoeffs g = single_component(0.8, std::log(0.2));
  const double h = 1e-6;
  const double grad = (gmm_log_prob(g, 0.8 + h) - gmm_log_prob(g, 0.8 - h)) / (2 * h);
  EXPECT_LT(std::abs(grad), 1e-8);
}

TEST(Transition, LearnedLogProbGradientMatchesFiniteDifferences) {
  SuiteConfig cfg;
  cfg.transition = ModelMode::Learned;
  ModelSuite suite = make_suite(cfg);
  RangeScan prev;
  prev.ranges.assign(60, 5.0);
  RangeScan cur = prev;
  cur.ranges[10] = 4.7;
  Tensor feat = transition_feature(ActionId::Forward, cur, prev);
  const Pose2D delta{0.24, 0.01, 0.02};

  // adjoints through the tape
  Tape tape;
  ParamCtx P(suite.store, &tape);
  Tensor lp = suite.transition.log_prob_t(P, feat, ActionId::Forward, delta);
  backward_into(tape, lp, suite.store);

  // central differences on a few parameters
  Rng pick(3);
  for (const auto& name : {std::string("trans/trunk/w"), std::string("trans/feature/b"),
                           TransitionModel::base_name(ActionId::Forward, 0)}) {
    Tensor& v = suite.store.value(name);
    const int idx = pick.uniform_int(v.numel());
    const double h = 1e-5;
    const double orig = v.data()[idx];
    v.data()[idx] = orig + h;
    const double fp = suite.transition.log_prob(suite.store, feat, ActionId::Forward, delta);
    v.data()[idx] = orig - h;
    const double fm = suite.transition.log_prob(suite.store, feat, ActionId::Forward, delta);
    v.data()[idx] = orig;
    const double fd = (fp - fm) / (2 * h);
    const double ad = suite.store.grad(name).data()[idx];
    EXPECT_LT(testutil::rel_err(ad, fd), 1e-4) << name;
  }
}

TEST(Transition, HandcraftedHasNoTrainableParameters) {
  SuiteConfig cfg;  // hhh
  ModelSuite suite = make_suite(cfg);
  EXPECT_EQ(suite.store.size(), 0u);
  EXPECT_EQ(suite.cfg.tmz(), "hhh");
}

TEST(Mapping, HandcraftedReproducesScanProjectionBitExactly) {
  FloorPlan plan = generate_floorplan(23, 9.6);
  Pose2D pose = roomy_pose(plan);
  RangeScan scan = scan_in_plan(plan, pose, 7, 0.01);
  SuiteConfig cfg;
  ModelSuite suite = make_suite(cfg);
  LocalMap predicted = suite.mapping.predict(suite.store, scan);
  LocalMap direct = scan_to_local_map(scan, cfg.geom);
  ASSERT_EQ(predicted.channels.numel(), direct.channels.numel());
  for (int i = 0; i < direct.channels.numel(); ++i)
    EXPECT_EQ(predicted.channels.data()[i], direct.channels.data()[i]);
}

TEST(Mapping, LearnedOutputShapesAndRanges) {
  SuiteConfig cfg;
  cfg.mapping = ModelMode::Learned;
  cfg.observation = ModelMode::Learned;
  cfg.n_latent = 4;
  ModelSuite suite = make_suite(cfg);
  RangeScan scan;
  scan.ranges.assign(60, 3.0);
  LocalMap m = suite.mapping.predict(suite.store, scan);
  EXPECT_EQ(m.n_channels(), 1 + 1 + 4);
  EXPECT_EQ(m.occ_channel, 0);
  EXPECT_EQ(m.vis_channel, 1);
  for (int i = 0; i < m.geom.n_cells; ++i)
    for (int j = 0; j < m.geom.n_cells; ++j) {
      EXPECT_GE(m.occ(i, j), 0.0);
      EXPECT_LE(m.occ(i, j), 1.0);
      EXPECT_TRUE(m.vis(i, j) == 0.0 || m.vis(i, j) == 1.0);
    }
}

TEST(Observation, SelfComparisonScoresHighestOverOffsets) {
  FloorPlan plan = generate_floorplan(29, 9.6);
  Pose2D pose = roomy_pose(plan);
  RangeScan scan = scan_in_plan(plan, pose, 11, 0.0);
  MapGeometry geom;
  LocalMap m = scan_to_local_map(scan, geom);
  ObservationModel obs = ObservationModel::handcrafted();
  ParamStore store;
  const double self = obs.compatibility(store, m, m, Pose2D::identity(), &scan);
  // 8 one-cell translations plus a one-cell-scale rotation
  int tested = 0;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj) {
      if (di == 0 && dj == 0) continue;
      Pose2D rel = make_pose(di * geom.cell_size, dj * geom.cell_size, 0.0);
      EXPECT_GE(self, obs.compatibility(store, m, m, rel, &scan)) << di << "," << dj;
      ++tested;
    }
  Pose2D rot = make_pose(0, 0, geom.cell_size / (0.5 * geom.side()));
  EXPECT_GE(self, obs.compatibility(store, m, m, rot, &scan));
  EXPECT_EQ(tested, 8);
}

TEST(Observation, NonOverlappingRelEqualsUnknownBaseline) {
  FloorPlan plan = generate_floorplan(31, 9.6);
  Pose2D pose = roomy_pose(plan);
  RangeScan scan = scan_in_plan(plan, pose, 13, 0.0);
  MapGeometry geom;
  LocalMap m = scan_to_local_map(scan, geom);
  ObservationModel obs = ObservationModel::handcrafted();
  ParamStore store;
  Pose2D far = make_pose(50.0, 50.0, 0.3);
  ASSERT_EQ(footprint_overlap(Pose2D::identity(), far, geom), 0.0);
  EXPECT_DOUBLE_EQ(obs.compatibility(store, m, m, far, &scan), obs.unknown_baseline_score(scan));
}

TEST(Observation, LearnedComparatorIsPureAndFinite) {
  SuiteConfig cfg;
  cfg.mapping = ModelMode::Learned;
  cfg.observation = ModelMode::Learned;
  ModelSuite suite = make_suite(cfg);
  RangeScan scan;
  scan.ranges.assign(60, 4.0);
  scan.ranges[20] = 2.0;
  LocalMap cur = suite.mapping.predict(suite.store, scan);
  LocalMap past = cur;
  const Pose2D rel = make_pose(0.1, -0.05, 0.1);
  const double a = suite.observation.compatibility(suite.store, cur, past, rel);
  const double b = suite.observation.compatibility(suite.store, cur, past, rel);
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_EQ(a, b);
}

TEST(Observation, GeometryMismatchThrows) {
  SuiteConfig cfg;
  ModelSuite suite = make_suite(cfg);
  LocalMap a = LocalMap::make(MapGeometry{40, 0.12}, true, 0);
  LocalMap b = LocalMap::make(MapGeometry{20, 0.12}, true, 0);
  RangeScan scan;
  scan.ranges.assign(10, 5.0);
  EXPECT_THROW(
      suite.observation.compatibility(suite.store, a, b, Pose2D::identity(), &scan),
      std::invalid_argument);
}

TEST(Observation, LearnedCompatibilityGradientFlowsThroughWarp) {
  SuiteConfig cfg;
  cfg.mapping = ModelMode::Learned;
  cfg.observation = ModelMode::Learned;
  ModelSuite suite = make_suite(cfg);
  RangeScan scan;
  scan.ranges.assign(60, 4.0);
  for (int b = 0; b < 60; ++b) scan.ranges[size_t(b)] = 2.0 + 0.05 * (b % 7);
  LocalMap cur = suite.mapping.predict(suite.store, scan);

  Tape tape;
  ParamCtx P(suite.store, &tape);
  Tensor rel = tape.leaf(Tensor::vector({0.08, -0.03, 0.05}), "rel");
  LocalMap cur_t = suite.mapping.predict_t(P, scan);
  Tensor c = suite.observation.compatibility_t(P, cur_t.channels, cur_t.channels, rel,
                                               cfg.geom.cell_size);
  tape.backward(c);
  Tensor grel = tape.grad(rel);
  // pose gradient reaches the relative pose and at least one model parameter
  double pose_norm = std::abs(grel.at(0)) + std::abs(grel.at(1)) + std::abs(grel.at(2));
  EXPECT_GT(pose_norm, 0.0);
  auto grads = tape.leaf_grads();
  double conv_norm = 0;
  for (const auto& [name, g] : grads)
    if (name.rfind("obs/", 0) == 0)
      for (int i = 0; i < g.numel(); ++i) conv_norm += std::abs(g.data()[i]);
  EXPECT_GT(conv_norm, 0.0);
}
