#include <gtest/gtest.h>

#include <cmath>

#include "dlsi/gradcheck.hpp"
#include "dlsi/nn.hpp"

using namespace dlsi;

TEST(Nn, TanhScalarDerivative) {
  // f(x) = tanh(w x), w = 0.5, x = 1
  Network net("t", {dense("t.0", 1, 1), activation(Activation::Tanh, 1)});
  ParamStore store;
  Rng rng(1);
  net.initialize(store, rng);
  store.mutable_value("t.0.weight").data[0] = 0.5;
  Mat x(1, 1);
  x(0, 0) = 1.0;
  const Tape tape = forward(net, store, x);
  EXPECT_NEAR(tape.output(0, 0), std::tanh(0.5), 1e-15);
  store.zero_grad();
  backward(tape, Mat::Ones(1, 1), store);
  EXPECT_NEAR(store.grad(store.index("t.0.weight")).data[0], 0.786448, 1e-6);
  EXPECT_NEAR(store.grad(store.index("t.0.weight")).data[0], 1.0 - std::pow(std::tanh(0.5), 2), 1e-15);
}

TEST(Nn, MaxPoolPermutationInvariant) {
  Network net("p", {pointwise("p.0", 3, 16), activation(Activation::Relu, 16), max_pool(16)});
  ParamStore store;
  Rng rng(2);
  net.initialize(store, rng);
  Mat x(40, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  const Mat y = forward_value(net, store, x);
  std::vector<Eigen::Index> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(perm.begin(), perm.end());
    Mat xp(40, 3);
    for (Eigen::Index i = 0; i < 40; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    EXPECT_TRUE(forward_value(net, store, xp) == y);
  }
}

TEST(Nn, MaxPoolTiesRouteToFirstIndex) {
  Network net("p", {max_pool(2)});
  ParamStore store;
  Mat x(3, 2);
  x << 1, 5, 1, 5, 0, 5;
  const Tape tape = forward(net, store, x);
  const Mat g = backward_input(tape, Mat::Ones(1, 2));
  Mat expect = Mat::Zero(3, 2);
  expect(0, 0) = 1;
  expect(0, 1) = 1;
  EXPECT_TRUE(g == expect);
}

TEST(Nn, MaxPoolGroupsSplitRows) {
  Network net("p", {max_pool(1)});
  ParamStore store;
  Mat x(4, 1);
  x << 1, 3, 7, 2;
  const Mat y = forward_value(net, store, x, 2);
  ASSERT_EQ(y.rows(), 2);
  EXPECT_EQ(y(0, 0), 3);
  EXPECT_EQ(y(1, 0), 7);
  EXPECT_THROW(forward(net, store, x, 3), Error);
}

TEST(Nn, AffineLayerIsFixed) {
  Eigen::RowVectorXd shift(2);
  shift << 1.0, -2.0;
  Network net("a", {affine(shift, 3.0)});
  ParamStore store;
  Rng rng(1);
  net.initialize(store, rng);
  EXPECT_EQ(store.size(), 0u);
  Mat x(2, 2);
  x << 0.5, 1.0, -1.0, 2.0;
  const Tape tape = forward(net, store, x);
  Mat expect(2, 2);
  expect << 4.5, -3.0, 0.0, 0.0;
  EXPECT_TRUE(tape.output == expect);
  EXPECT_TRUE(backward_input(tape, Mat::Ones(2, 2)) == Mat::Constant(2, 2, 3.0));
}

TEST(Nn, AdamFirstStepHandValue) {
  ParamStore store;
  const auto i = store.add("w", {1});
  store.mutable_value(i).data[0] = 1.0;
  store.grad(i).data[0] = 2.0;
  ASSERT_TRUE(adam_step(store, {}, 1));
  EXPECT_NEAR(store.value(i).data[0], 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8), 1e-15);
}

TEST(Nn, AdamSkipsNonFiniteGradient) {
  ParamStore store;
  const auto i = store.add("w", {2});
  store.grad(i).data[1] = std::nan("");
  EXPECT_FALSE(adam_step(store, {}, 1));
  EXPECT_EQ(store.value(i).data[0], 0.0);
}

TEST(Nn, AdamLeavesFrozenSlotsAlone) {
  ParamStore store;
  const auto a = store.add("a.w", {1});
  const auto b = store.add("b.w", {1});
  store.grad(a).data[0] = 1.0;
  store.grad(b).data[0] = 1.0;
  store.set_trainable("b.", false);
  adam_step(store, {}, 1);
  EXPECT_NE(store.value(a).data[0], 0.0);
  EXPECT_EQ(store.value(b).data[0], 0.0);
}

TEST(Nn, BackwardSkipsFrozenParameters) {
  Network net("t", {dense("t.0", 2, 2)});
  ParamStore store;
  Rng rng(3);
  net.initialize(store, rng);
  store.set_all_trainable(false);
  const Tape tape = forward(net, store, Mat::Ones(1, 2));
  backward(tape, Mat::Ones(1, 2), store);
  for (const auto& s : store.slots()) {
    for (double g : s.grad.data) EXPECT_EQ(g, 0.0);
  }
}

TEST(Nn, StaleTapeRejected) {
  Network net("t", {dense("t.0", 2, 2)});
  ParamStore store;
  Rng rng(3);
  net.initialize(store, rng);
  const Tape tape = forward(net, store, Mat::Ones(1, 2));
  store.mutable_value(0).data[0] += 1.0;
  EXPECT_THROW(backward(tape, Mat::Ones(1, 2), store), Error);
}

TEST(Nn, CompositionValidated) {
  EXPECT_THROW(Network("t", {dense("t.0", 2, 3), dense("t.1", 4, 1)}), Error);
  Network net("t", {dense("t.0", 2, 3)});
  ParamStore store;
  Rng rng(1);
  net.initialize(store, rng);
  EXPECT_THROW(forward(net, store, Mat::Ones(1, 5)), Error);
}

TEST(Nn, GlorotInitialisation) {
  Network net("t", {dense("t.0", 30, 20)});
  ParamStore store;
  Rng rng(4);
  net.initialize(store, rng);
  const double limit = std::sqrt(6.0 / 50.0);
  for (double w : store.value("t.0.weight").data) EXPECT_LE(std::abs(w), limit);
  for (double b : store.value("t.0.bias").data) EXPECT_EQ(b, 0.0);
}

TEST(Nn, RngStreamsDeterministic) {
  Rng a(mix_seed(9, 1)), b(mix_seed(9, 1)), c(mix_seed(9, 2));
  EXPECT_EQ(a.uniform(0, 1), b.uniform(0, 1));
  EXPECT_NE(Rng(mix_seed(9, 1)).uniform(0, 1), c.uniform(0, 1));
}

TEST(Nn, GradcheckSuitePasses) {
  const auto results = run_gradcheck();
  EXPECT_GE(results.size(), 20u);
  for (const auto& g : results) {
    EXPECT_LT(g.max_rel_error, 1e-5) << g.name;
    EXPECT_GT(g.entries, 0u) << g.name;
  }
}
