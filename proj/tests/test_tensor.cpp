#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "wcgan/error.hpp"
#include "wcgan/gradcheck.hpp"
#include "wcgan/ops.hpp"

using namespace wcgan;
using wcgan::testing::max_rel_error;
using wcgan::testing::numeric_gradient;
using wcgan::testing::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Analytic gradient of f() w.r.t. x via one backward sweep.
std::vector<double> analytic_gradient(Tensor& x, const std::function<Tensor(Graph&)>& f) {
  x.zero_grad();
  Graph g;
  g.backward(f(g));
  return {x.grad().begin(), x.grad().end()};
}

double check_against_oracle(Tensor& x, const std::function<Tensor(Graph&)>& f) {
  auto analytic = analytic_gradient(x, f);
  auto numeric = numeric_gradient(x, [&] {
    Graph g;
    return f(g).item();
  });
  return max_rel_error(analytic, numeric);
}

}  // namespace

TEST(Tensor, RejectsInconsistentShape) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({2, 0}, {}), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(shape_numel(t.shape()), t.data().size());
}

TEST(Tensor, GradHasDataShape) {
  auto t = Tensor::zeros({3, 2}, true);
  EXPECT_TRUE(t.has_grad());
  EXPECT_EQ(t.grad().size(), t.numel());
}

TEST(Tensor, CloneIsDeepAndHandleIsShared) {
  Tensor a({2}, {1, 2});
  Tensor b = a;
  Tensor c = a.clone();
  a[0] = 5;
  EXPECT_EQ(b[0], 5);
  EXPECT_EQ(c[0], 1);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.same_storage(c));
}

TEST(Matmul, IdentityCase) {
  Graph g;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(g, eye, m)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, OrthogonalSelection) {
  Graph g;
  auto out = matmul(g, Tensor({1, 2}, {1, 0}), Tensor({2, 1}, {0, 5}));
  EXPECT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_EQ(out[0], 0.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Graph g;
  try {
    matmul(g, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  auto a = random_tensor({3, 4}, 1);
  auto b = random_tensor({4, 2}, 2);
  auto f = [&](Graph& g) { return sum(g, matmul(g, a, b)); };
  EXPECT_LE(check_against_oracle(a, f), 1e-6);
  EXPECT_LE(check_against_oracle(b, f), 1e-6);
}

TEST(Conv2d, TableTwoFirstRowShape) {
  Graph g;
  auto x = random_tensor({3, 32, 32}, 3, -1, 1, false);
  auto w = random_tensor({16, 3, 3, 3}, 4, -1, 1, false);
  auto out = conv2d(g, x, w, Tensor::zeros({16}), 2, 1);
  EXPECT_EQ(out.shape(), (Shape{16, 16, 16}));
}

TEST(Conv2d, IdentityKernel) {
  Graph g;
  auto x = random_tensor({1, 4, 5}, 5, -1, 1, false);
  auto out = conv2d(g, x, Tensor({1, 1, 1, 1}, {1.0}), Tensor::zeros({1}), 1, 0);
  EXPECT_TRUE(bitwise_equal(out, x));
}

TEST(Conv2d, MatchesNaiveLoops) {
  Graph g;
  auto x = random_tensor({2, 7, 6}, 6, -1, 1, false);
  auto w = random_tensor({3, 2, 3, 3}, 7, -1, 1, false);
  auto b = random_tensor({3}, 8, -1, 1, false);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      auto out = conv2d(g, x, w, b, stride, pad);
      auto ref = wcgan::testing::naive_conv(x, w, b, stride, pad);
      ASSERT_EQ(out.numel(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
    }
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  auto x = random_tensor({2, 5, 5}, 9);
  auto w = random_tensor({3, 2, 3, 3}, 10);
  auto b = random_tensor({3}, 11);
  auto weights = random_tensor({3, 5, 5}, 12, -1, 1, false);
  auto f = [&](Graph& g) { return sum(g, mul(g, conv2d(g, x, w, b, 1, 1), weights)); };
  EXPECT_LE(check_against_oracle(x, f), 1e-6);
  EXPECT_LE(check_against_oracle(w, f), 1e-6);
  EXPECT_LE(check_against_oracle(b, f), 1e-6);
}

TEST(Conv2d, OutputBelowOneIsShapeError) {
  Graph g;
  EXPECT_THROW(conv2d(g, Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor::zeros({1}), 1, 0),
               DimensionError);
}

TEST(Upsample, BlockReplication) {
  Graph g;
  auto out = upsample_nearest(g, Tensor({1, 2, 2}, {1, 2, 3, 4}), 2);
  EXPECT_EQ(out.shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(values(out), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Upsample, FactorOneIsIdentityAndZeroRejected) {
  Graph g;
  Tensor x({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_TRUE(bitwise_equal(upsample_nearest(g, x, 1), x));
  EXPECT_THROW(upsample_nearest(g, x, 0), ParameterError);
}

TEST(Upsample, SumGradientIsFactorSquared) {
  auto x = random_tensor({2, 3, 3}, 13);
  for (std::size_t f : {2u, 3u}) {
    auto grad = analytic_gradient(x, [&](Graph& g) { return sum(g, upsample_nearest(g, x, f)); });
    for (double v : grad) EXPECT_EQ(v, static_cast<double>(f * f));
  }
}

TEST(Upsample, StridedSubsamplingRecoversInput) {
  Graph g;
  auto x = random_tensor({2, 3, 4}, 14, -1, 1, false);
  const std::size_t f = 3;
  auto up = upsample_nearest(g, x, f);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        EXPECT_EQ(up[(c * 9 + i * f) * 12 + j * f], x[(c * 3 + i) * 4 + j]);
}

TEST(BatchNorm, ConstantInputGivesZeros) {
  Graph g;
  RunningStats rs(2);
  auto out = batchnorm(g, Tensor::full({4, 2, 3}, 7.0), Tensor::full({2}, 1.0), Tensor::zeros({2}), {}, Mode::train, rs);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  Graph g;
  RunningStats rs(2);
  auto x = random_tensor({4, 2, 3}, 15, -1, 1, false);
  auto out = batchnorm(g, x, Tensor::zeros({2}), Tensor::full({2}, 0.3), {}, Mode::train, rs);
  for (double v : out.data()) EXPECT_EQ(v, 0.3);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  auto x = random_tensor({4, 2, 3, 3}, 16);
  auto gamma = random_tensor({2}, 17, 0.5, 1.5);
  auto beta = random_tensor({2}, 18);
  auto weights = random_tensor({4, 2, 3, 3}, 19, -1, 1, false);
  for (double eps : {1e-5, 0.8}) {
    auto f = [&](Graph& g) {
      RunningStats rs(2);
      return sum(g, mul(g, batchnorm(g, x, gamma, beta, {eps, 0.1}, Mode::train, rs), weights));
    };
    EXPECT_LE(check_against_oracle(x, f), 1e-5);
    EXPECT_LE(check_against_oracle(gamma, f), 1e-5);
    EXPECT_LE(check_against_oracle(beta, f), 1e-5);
  }
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
  Graph g;
  RunningStats rs(1);
  Tensor x({4, 1}, {1, 2, 3, 6});
  batchnorm(g, x, Tensor::full({1}, 1.0), Tensor::zeros({1}), {1e-5, 0.1}, Mode::train, rs);
  // mean 3, unbiased var (4+1+0+9)/3
  EXPECT_NEAR(rs.mean[0], 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(rs.var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
  EXPECT_EQ(rs.batches_tracked, 1u);
}

TEST(BatchNorm, EvalWithoutStatsIsStateError) {
  Graph g;
  RunningStats rs(2);
  EXPECT_THROW(batchnorm(g, Tensor::zeros({1, 2}), Tensor::full({2}, 1.0), Tensor::zeros({2}), {}, Mode::eval, rs),
               StateError);
}

TEST(Activations, KnownValues) {
  Graph g;
  EXPECT_DOUBLE_EQ(leaky_relu(g, Tensor::scalar(-1.0), 0.2).item(), -0.2);
  EXPECT_EQ(tanh(g, Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(sigmoid(g, Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_THROW(leaky_relu(g, Tensor::scalar(1.0), 1.0), ParameterError);
  EXPECT_THROW(leaky_relu(g, Tensor::scalar(1.0), 0.0), ParameterError);
}

TEST(Activations, GradientsMatchFiniteDifferences) {
  // Keep leaky_relu inputs away from the kink at 0.
  auto x = random_tensor({5, 4}, 20, 0.05, 2.0);
  for (std::size_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
  auto w = random_tensor({5, 4}, 21, -1, 1, false);
  EXPECT_LE(check_against_oracle(x, [&](Graph& g) { return sum(g, mul(g, leaky_relu(g, x, 0.2), w)); }), 1e-6);
  EXPECT_LE(check_against_oracle(x, [&](Graph& g) { return sum(g, mul(g, tanh(g, x), w)); }), 1e-6);
  EXPECT_LE(check_against_oracle(x, [&](Graph& g) { return sum(g, mul(g, sigmoid(g, x), w)); }), 1e-6);
}

TEST(Dropout, IdentityCases) {
  Graph g;
  Rng rng(1);
  auto x = random_tensor({10, 10}, 22, -1, 1, false);
  EXPECT_TRUE(bitwise_equal(dropout(g, x, 0.0, Mode::train, rng), x));
  EXPECT_TRUE(bitwise_equal(dropout(g, x, 0.25, Mode::eval, rng), x));
  EXPECT_THROW(dropout(g, x, 1.0, Mode::train, rng), ParameterError);
  EXPECT_THROW(dropout(g, x, -0.1, Mode::train, rng), ParameterError);
}

TEST(Dropout, SurvivingFractionConcentrates) {
  Graph g;
  Rng rng(2);
  auto out = dropout(g, Tensor::full({100000}, 1.0), 0.25, Mode::train, rng);
  std::size_t alive = 0;
  for (double v : out.data()) {
    if (v != 0.0) {
      ++alive;
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
  }
  EXPECT_NEAR(static_cast<double>(alive) / 1e5, 0.75, 0.01);
}

TEST(Dropout, SameStreamSameMask) {
  Graph g;
  Rng a(3), b(3);
  auto x = random_tensor({50}, 23, -1, 1, false);
  EXPECT_TRUE(bitwise_equal(dropout(g, x, 0.5, Mode::train, a), dropout(g, x, 0.5, Mode::train, b)));
}

TEST(Backward, SumGivesOnes) {
  auto x = random_tensor({2, 2}, 24);
  for (double v : analytic_gradient(x, [&](Graph& g) { return sum(g, x); })) EXPECT_EQ(v, 1.0);
}

TEST(Backward, ZeroTimesFunctionGivesZeros) {
  auto x = random_tensor({2, 3}, 25);
  for (double v : analytic_gradient(x, [&](Graph& g) { return scale(g, sum(g, tanh(g, x)), 0.0); })) EXPECT_EQ(v, 0.0);
}

TEST(Backward, UnreachedParameterGetsZero) {
  auto x = random_tensor({3}, 26);
  auto y = random_tensor({3}, 27);
  Graph g;
  g.backward(sum(g, x));
  for (double v : y.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  auto x = random_tensor({3}, 28);
  Graph g;
  auto y = tanh(g, x);
  EXPECT_THROW(g.backward(y), ContractError);
}

TEST(Backward, SecondSweepAccumulates) {
  auto x = random_tensor({4}, 29);
  Graph g;
  auto loss = sum(g, mul(g, x, x));
  g.backward(loss);
  const auto once = values(Tensor(x.shape(), {x.grad().begin(), x.grad().end()}));
  g.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * once[i]);
}

TEST(Backward, CompositeNetworkMatchesFiniteDifferences) {
  auto in = random_tensor({4, 3}, 30, -1, 1, false);
  auto w1 = random_tensor({3, 5}, 31);
  auto b1 = random_tensor({5}, 32);
  auto w2 = random_tensor({5, 1}, 33);
  auto b2 = random_tensor({1}, 34);
  auto f = [&](Graph& g) { return mean(g, linear(g, leaky_relu(g, linear(g, in, w1, b1), 0.2), w2, b2)); };
  for (Tensor* p : {&w1, &b1, &w2, &b2}) EXPECT_LE(check_against_oracle(*p, f), 1e-5);
}

TEST(Backward, GraphIsTopologicallyOrdered) {
  auto x = random_tensor({2, 2}, 35);
  Graph g;
  sum(g, tanh(g, mul(g, x, x)));
  const auto& nodes = g.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& in : nodes[i].inputs) {
      bool produced_later = false;
      for (std::size_t j = i; j < nodes.size(); ++j) produced_later |= nodes[j].output.same_storage(in);
      EXPECT_FALSE(produced_later);
    }
  }
}

TEST(Gradcheck, QuadraticIsExact) {
  Tensor x = Tensor::scalar(3.0, true);
  std::vector<Tensor> params{x};
  auto report = gradcheck([&](Graph& g) { return mul(g, x, x); }, params);
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_rel_error, 1e-8);
  EXPECT_DOUBLE_EQ(report.worst_analytic, 6.0);
}

TEST(Gradcheck, AbsoluteValueAtKinkIsFlagged) {
  Tensor x = Tensor::scalar(0.0, true);
  std::vector<Tensor> params{x};
  auto report = gradcheck([&](Graph& g) { return abs(g, x); }, params);
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 1e-4);
}

TEST(Gradcheck, LeavesGradientsZeroed) {
  Tensor x = random_tensor({3}, 36);
  std::vector<Tensor> params{x};
  gradcheck([&](Graph& g) { return sum(g, mul(g, x, x)); }, params);
  for (double v : x.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Ops, ConcatAndSliceRows) {
  auto a = random_tensor({2, 3}, 60), b = random_tensor({1, 3}, 61);
  Graph g;
  auto c = concat_rows(g, a, b);
  EXPECT_EQ(c.shape(), (Shape{3, 3}));
  EXPECT_EQ(c[7], b[1]);
  auto s = slice_rows(g, c, 1, 3);
  EXPECT_EQ(s.shape(), (Shape{2, 3}));
  EXPECT_EQ(s[0], a[3]);
  EXPECT_EQ(s[5], b[2]);
  EXPECT_THROW(concat_rows(g, a, random_tensor({1, 4}, 62)), DimensionError);
  EXPECT_THROW(slice_rows(g, a, 1, 3), DimensionError);
}

TEST(Ops, ConcatSliceGradient) {
  auto a = random_tensor({2, 3}, 63), b = random_tensor({3, 3}, 64);
  auto w = random_tensor({3, 3}, 65, -1, 1, false);
  auto f = [&](Graph& g) { return sum(g, mul(g, slice_rows(g, concat_rows(g, a, mul(g, b, b)), 1, 4), w)); };
  EXPECT_LT(check_against_oracle(a, f), 1e-6);
  EXPECT_LT(check_against_oracle(b, f), 1e-6);
}

TEST(Ops, DeterministicForward) {
  auto x = random_tensor({2, 3, 4, 4}, 37, -1, 1, false);
  auto w = random_tensor({2, 3, 3, 3}, 38, -1, 1, false);
  Graph g;
  auto a = conv2d(g, x, w, Tensor::zeros({2}), 1, 1);
  auto b = conv2d(g, x, w, Tensor::zeros({2}), 1, 1);
  EXPECT_TRUE(bitwise_equal(a, b));
}

TEST(Ops, LogRejectsNonPositive) {
  Graph g;
  EXPECT_THROW(log(g, Tensor({2}, {1.0, 0.0})), ContractError);
}

TEST(Ops, SoftmaxCrossEntropyGradient) {
  auto logits = random_tensor({4, 3}, 39, -2, 2);
  const std::vector<int> labels{0, 2, 1, 2};
  EXPECT_LE(check_against_oracle(logits, [&](Graph& g) { return softmax_cross_entropy(g, logits, labels); }), 1e-6);
  auto p = softmax(logits);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(p[3 * r] + p[3 * r + 1] + p[3 * r + 2], 1.0, 1e-12);
}
