#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "dslam/core/autodiff.hpp"
#include "dslam/core/checkpoint.hpp"
#include "dslam/core/param_store.hpp"
#include "dslam/core/random.hpp"
#include "fd_check.hpp"
#include "op_grad_cases.hpp"

using namespace dslam;

TEST(Tensor, ShapeAndInvariants) {
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(0), 2);
  EXPECT_TRUE(t.all_finite());
  t.at(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Ops, AddExample) {
  Tensor a = Tensor::vector({1, 2});
  Tensor b = Tensor::vector({3, 4});
  Tensor c = add(a, b);
  EXPECT_DOUBLE_EQ(c.at(0), 4.0);
  EXPECT_DOUBLE_EQ(c.at(1), 6.0);
}

TEST(Ops, LogSumExpExample) {
  Tensor x = Tensor::vector({0, 0, 0});
  EXPECT_NEAR(logsumexp(x, 0).value(), std::log(3.0), 1e-12);
}

TEST(Ops, Conv2dHandCase) {
  // 4x4 ones convolved with a 3x3 ones kernel, zero padding: each output is
  // the count of in-bounds neighbors -> corners 4, edges 6, center 9.
  Tensor x(Shape{4, 4, 1}, 1.0);
  Tensor k(Shape{3, 3, 1, 1}, 1.0);
  Tensor y = conv2d(x, k);
  const double expected[4][4] = {
      {4, 6, 6, 4}, {6, 9, 9, 6}, {6, 9, 9, 6}, {4, 6, 6, 4}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(y.at(i, j, 0), expected[i][j]);
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
  Tensor a(Shape{2, 3});
  Tensor b(Shape{3, 2});
  try {
    add(a, b);
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
}

TEST(Backward, QuadraticExample) {
  Tape tape;
  Tensor w = tape.leaf(Tensor::vector({1, 2}), "w");
  Tensor loss = sum(mul(w, w));
  tape.backward(loss);
  Tensor g = tape.grad(w);
  EXPECT_DOUBLE_EQ(g.at(0), 2.0);
  EXPECT_DOUBLE_EQ(g.at(1), 4.0);
}

TEST(Backward, SigmoidAtZero) {
  Tape tape;
  Tensor x = tape.leaf(Tensor::scalar(0.0), "x");
  Tensor loss = sigmoid(x);
  tape.backward(loss);
  EXPECT_NEAR(tape.grad(x).value(), 0.25, 1e-15);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Tensor x = tape.leaf(Tensor::vector({1, 2}), "x");
  Tensor y = mul(x, x);
  EXPECT_THROW(tape.backward(y), std::invalid_argument);
}

TEST(Backward, UnreachableParamHasZeroGrad) {
  Tape tape;
  ParamStore store;
  store.create("used", Shape{2}, 1.0);
  store.create("unused", Shape{3}, 1.0);
  ParamCtx ctx(store, &tape);
  Tensor loss = sum(mul(ctx("used"), ctx("used")));
  Tensor unused_leaf = ctx("unused");
  (void)unused_leaf;
  backward_into(tape, loss, store);
  EXPECT_DOUBLE_EQ(store.grad("used").at(0), 2.0);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(store.grad("unused").at(i), 0.0);
}

TEST(Backward, TwoLayerNetworkMatchesFiniteDifferences) {
  Rng rng(7);
  Tensor x = testutil::rand_tensor(rng, Shape{1, 4});
  Tensor w1 = testutil::rand_tensor(rng, Shape{4, 8});
  Tensor b1 = testutil::rand_tensor(rng, Shape{8});
  Tensor w2 = testutil::rand_tensor(rng, Shape{8, 1});
  Tensor b2 = testutil::rand_tensor(rng, Shape{1});
  auto f = [](const std::vector<Tensor>& p) {
    Tensor h = dslam::tanh(bias_add(matmul(p[0], p[1]), p[2]));
    Tensor y = bias_add(matmul(h, p[3]), p[4]);
    return sum(y);
  };
  auto rep = testutil::fd_check(f, {x, w1, b1, w2, b2});
  EXPECT_LT(rep.max_rel_err, 1e-4);
}

TEST(Backward, OpGradientSweep) {
  Rng rng(12345);
  for (const auto& c : testutil::op_grad_cases()) {
    double worst = 0;
    for (int it = 0; it < 20; ++it) {
      auto [f, inputs] = c.make(rng);
      auto rep = testutil::fd_check(f, inputs);
      worst = std::max(worst, rep.max_rel_err);
    }
    EXPECT_LT(worst, 1e-4) << "op " << c.name;
  }
}

TEST(Tape, ReuseGivesIdenticalGradients) {
  Tape tape;
  Rng rng(3);
  Tensor w = tape.leaf(testutil::rand_tensor(rng, Shape{3, 3}), "w");
  Tensor loss = mean(sigmoid(mul(w, w)));
  tape.backward(loss);
  Tensor g1 = tape.grad(w);
  tape.backward(loss);
  Tensor g2 = tape.grad(w);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(g1.data()[i], g2.data()[i]);
}

TEST(Tape, DeterministicForwardAndGradients) {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    Tensor w = tape.leaf(testutil::rand_tensor(rng, Shape{4, 4}), "w");
    Tensor x = testutil::rand_tensor(rng, Shape{4, 4});
    Tensor loss = sum(dslam::tanh(matmul(w, x)));
    tape.backward(loss);
    auto g = tape.grad(w);
    std::vector<double> out(g.data(), g.data() + g.numel());
    out.push_back(loss.value());
    return out;
  };
  auto a = run(99), b = run(99);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Tape, NonFiniteForwardThrows) {
  Tape tape;
  Tensor x = tape.leaf(Tensor::scalar(-1.0), "x");
  EXPECT_THROW(dslam::log(x), std::runtime_error);
}

TEST(Adam, HandEvaluatedFirstStep) {
  ParamStore store;
  store.create("p", Shape{1}, 0.5);
  store.grad("p").at(0) = 1.0;
  store.adam_step(0.1);
  // m=0.1, v=0.001, bias corrections make mhat=vhat=1 -> step = -lr/(1+eps)
  EXPECT_NEAR(store.value("p").value(), 0.5 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, FrozenParameterUnchanged) {
  ParamStore store;
  store.create("p", Shape{2}, 1.0);
  store.set_trainable("p", false);
  store.grad("p").at(0) = 5.0;
  store.grad("p").at(1) = -3.0;
  store.adam_step(0.1);
  EXPECT_DOUBLE_EQ(store.value("p").at(0), 1.0);
  EXPECT_DOUBLE_EQ(store.value("p").at(1), 1.0);
}

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  ParamStore store;
  store.create("p", Shape{1}, 2.0);
  store.adam_step(0.1);
  EXPECT_DOUBLE_EQ(store.value("p").value(), 2.0);
}

TEST(Checkpoint, RoundTrip) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "dslam_ckpt_test.bin").string();
  ParamStore store;
  Rng rng(5);
  store.create_dense("a/w", Shape{3, 4}, 3, 4, rng);
  store.create("a/b", Shape{4}, 0.25);
  save_checkpoint(path, store);

  auto loaded = load_checkpoint(path);
  ASSERT_EQ(loaded.size(), 2u);
  ASSERT_TRUE(loaded.count("a/w"));
  for (int i = 0; i < 12; ++i) EXPECT_EQ(loaded["a/w"].data()[i], store.value("a/w").data()[i]);

  ParamStore other;
  other.create("a/w", Shape{3, 4});
  other.create("a/b", Shape{4});
  load_checkpoint_into(path, other);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(other.value("a/b").at(i), 0.25);
  fs::remove(path);
}

TEST(Checkpoint, VersionMismatchNamesVersions) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "dslam_ckpt_badver.bin").string();
  {
    std::ofstream os(path, std::ios::binary);
    os.write(ckpt::kMagic, 4);
    os.put(char(9));
    ckpt::write_u32(os, 0);
  }
  try {
    load_checkpoint(path);
    FAIL() << "expected throw";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("9"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1"), std::string::npos) << msg;
  }
  fs::remove(path);
}

TEST(ParamStore, FreezePrefix) {
  ParamStore store;
  store.create("trans/feature/w", Shape{2});
  store.create("trans/trunk/w", Shape{2});
  store.create("obs/w", Shape{2});
  store.freeze_prefix("trans/feature");
  EXPECT_FALSE(store.trainable("trans/feature/w"));
  EXPECT_TRUE(store.trainable("trans/trunk/w"));
  EXPECT_TRUE(store.trainable("obs/w"));
}
