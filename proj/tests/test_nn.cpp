#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "vcps/nn.hpp"

using namespace vcps;
using namespace vcps::nn;

namespace {

// Loss = sum(c .* forward(x)) so dLoss/dOutput = c.
double weighted_output(const Mlp& net, const Mlp::Matrix& x, const Mlp::Matrix& c) {
  return forward<double>(net, x).cwiseProduct(c).sum();
}

}  // namespace

TEST(Nn, ZeroNetOutputs) {
  Mlp net({3, 4, 2}, OutputActivation::sigmoid);
  const std::vector<double> x{1, 2, 3};
  const auto y = forward<double>(net, x);
  EXPECT_DOUBLE_EQ(y(0), 0.5);
  EXPECT_DOUBLE_EQ(y(1), 0.5);
  Mlp lin({3, 2}, OutputActivation::identity);
  EXPECT_EQ(forward<double>(lin, x).squaredNorm(), 0.0);
}

TEST(Nn, OneByOneReluPath) {
  Mlp net({1, 1, 1}, OutputActivation::identity);
  auto p = net.parameters();
  p[0] = 1.5;  // W0
  p[1] = 0.0;  // b0
  p[2] = 1.0;  // W1
  p[3] = 0.0;  // b1
  const std::vector<double> x{2.0};
  EXPECT_DOUBLE_EQ(forward<double>(net, x)(0), 3.0);
  const std::vector<double> neg{-2.0};
  EXPECT_DOUBLE_EQ(forward<double>(net, neg)(0), 0.0);
}

TEST(Nn, BatchMatchesSingles) {
  Mlp net({4, 6, 3}, OutputActivation::sigmoid);
  Rng rng(1);
  net.initialize(rng);
  Mlp::Matrix x = Mlp::Matrix::Random(4, 2);
  const auto batch = forward<double>(net, x);
  for (int c = 0; c < 2; ++c) {
    const Mlp::Matrix col = x.col(c);
    EXPECT_TRUE(batch.col(c).isApprox(forward<double>(net, col).col(0), 1e-15));
  }
}

TEST(Nn, BackwardMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Mlp net({3, 5, 4, 2}, trial % 2 ? OutputActivation::sigmoid : OutputActivation::identity);
    net.initialize(rng);
    Mlp::Matrix x = Mlp::Matrix::Random(3, 4);
    Mlp::Matrix c = Mlp::Matrix::Random(2, 4);
    ForwardCache<double> cache;
    forward<double>(net, x, &cache);
    std::vector<double> grad(net.parameters().size());
    Mlp::Matrix dx;
    backward<double>(net, cache, c, grad, &dx);
    const double h = 1e-5;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      Mlp plus = net, minus = net;
      plus.parameters()[i] += h;
      minus.parameters()[i] -= h;
      const double fd = (weighted_output(plus, x, c) - weighted_output(minus, x, c)) / (2 * h);
      EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "param " << i;
    }
    for (int r = 0; r < 3; ++r) {
      Mlp::Matrix xp = x, xm = x;
      xp(r, 0) += h;
      xm(r, 0) -= h;
      const double fd = (weighted_output(net, xp, c) - weighted_output(net, xm, c)) / (2 * h);
      EXPECT_NEAR(dx(r, 0), fd, 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Nn, ZeroOutputGradient) {
  Mlp net({3, 4, 2}, OutputActivation::sigmoid);
  Rng rng(2);
  net.initialize(rng);
  Mlp::Matrix x = Mlp::Matrix::Random(3, 5);
  ForwardCache<double> cache;
  forward<double>(net, x, &cache);
  std::vector<double> grad(net.parameters().size(), 1.0);
  backward<double>(net, cache, Mlp::Matrix::Zero(2, 5), grad);
  for (double g : grad) EXPECT_EQ(g, 0.0);
}

TEST(Nn, BatchGradientIsSumOfSingles) {
  Mlp net({3, 4, 2}, OutputActivation::identity);
  Rng rng(3);
  net.initialize(rng);
  Mlp::Matrix x = Mlp::Matrix::Random(3, 3), c = Mlp::Matrix::Random(2, 3);
  ForwardCache<double> cache;
  forward<double>(net, x, &cache);
  std::vector<double> whole(net.parameters().size()), sum(whole.size(), 0.0), one(whole.size());
  backward<double>(net, cache, c, whole);
  for (int k = 0; k < 3; ++k) {
    const Mlp::Matrix xk = x.col(k), ck = c.col(k);
    forward<double>(net, xk, &cache);
    backward<double>(net, cache, ck, one);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += one[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(whole[i], sum[i], 1e-12);
}

TEST(Nn, AdamZeroGradientLeavesParameters) {
  Mlp net({2, 3, 1}, OutputActivation::identity);
  Rng rng(4);
  net.initialize(rng);
  const Mlp before = net;
  AdamState<double> st(net.parameters().size(), 1e-3);
  std::vector<double> g(net.parameters().size(), 0.0);
  adam_step<double>(st, net, g);
  EXPECT_EQ(net, before);
}

TEST(Nn, AdamFirstStepIsLearningRateTimesSign) {
  Mlp net({2, 1}, OutputActivation::identity);
  AdamState<double> st(net.parameters().size(), 1e-3);
  std::vector<double> g{0.5, -2.0, 3.0};
  adam_step<double>(st, net, g);
  EXPECT_NEAR(net.parameters()[0], -1e-3, 1e-10);
  EXPECT_NEAR(net.parameters()[1], 1e-3, 1e-10);
  EXPECT_NEAR(net.parameters()[2], -1e-3, 1e-10);
}

TEST(Nn, AdamRejectsNonFiniteWithLayer) {
  Mlp net({2, 2, 1}, OutputActivation::identity);
  AdamState<double> st(net.parameters().size(), 1e-3);
  std::vector<double> g(net.parameters().size(), 0.0);
  g[net.layer_begin(1)] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step<double>(st, net, g);
    FAIL();
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.layer(), 1u);
    EXPECT_EQ(st.step, 0);
  }
}

TEST(Nn, AdamDeterministic) {
  auto run = [] {
    Mlp net({3, 4, 1}, OutputActivation::identity);
    Rng rng(5);
    net.initialize(rng);
    AdamState<double> st(net.parameters().size(), 1e-2);
    std::vector<double> g(net.parameters().size());
    for (int k = 0; k < 10; ++k) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sin(static_cast<double>(i + k));
      adam_step<double>(st, net, g);
    }
    return net;
  };
  EXPECT_EQ(run(), run());
}

TEST(Nn, SoftUpdate) {
  Mlp a({1, 1}, OutputActivation::identity), b = a;
  a.parameters()[0] = 2.0;
  soft_update(b, a, 0.5);
  EXPECT_DOUBLE_EQ(b.parameters()[0], 1.0);
  soft_update(b, a, 1.0);
  EXPECT_EQ(b, a);
  Mlp c({1, 1}, OutputActivation::identity);
  double prev = 2.0;
  for (int i = 0; i < 50; ++i) {
    soft_update(c, a, 0.1);
    const double gap = 2.0 - c.parameters()[0];
    EXPECT_NEAR(gap, 0.9 * prev, 1e-12);
    prev = gap;
  }
  EXPECT_THROW(soft_update(c, a, 0.0), std::invalid_argument);
}

TEST(Nn, CheckpointRoundTrip) {
  Mlp net({3, 5, 2}, OutputActivation::sigmoid);
  Rng rng(6);
  net.initialize(rng);
  std::stringstream ss;
  save_checkpoint(ss, net);
  EXPECT_EQ(load_checkpoint<double>(ss), net);
  std::stringstream bad("vcps-mlp 2\n");
  EXPECT_THROW(load_checkpoint<double>(bad), std::runtime_error);
}

TEST(Nn, InitializationBounds) {
  Mlp net({16, 8, 1}, OutputActivation::identity);
  Rng rng(8);
  net.initialize(rng);
  for (std::size_t i = net.layer_begin(0); i < net.layer_end(0); ++i) EXPECT_LE(std::abs(net.parameters()[i]), 0.25);
  EXPECT_THROW(forward<double>(net, Mlp::Matrix::Zero(3, 1)), ShapeError);
}
