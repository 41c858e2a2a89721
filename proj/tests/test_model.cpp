#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "wcgan/error.hpp"
#include "wcgan/model.hpp"

using namespace wcgan;

namespace {

Tensor latents(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * d);
  rng.fill_normal(v);
  return Tensor({n, d}, std::move(v));
}

const DenseLayer* dense_at(const ModelSpec& spec, std::size_t i) { return std::get_if<DenseLayer>(&spec.layers.at(i)); }

}  // namespace

TEST(Generator, FirstDenseMatchesTableOne) {
  auto net = build_generator(100, 3, 8, 128, 1);
  const auto* d = dense_at(net.spec(), 0);
  ASSERT_NE(d, nullptr);
  EXPECT_EQ(d->in, 100u);
  EXPECT_EQ(d->out, 8192u);
  EXPECT_EQ(net.spec().output_shape(), (Shape{3, 32, 32}));
}

TEST(Generator, CanonicalTraceFollowsTableOneRowByRow) {
  const auto spec = generator_spec(100, 3, 8, 128);
  const std::vector<Shape> expected{
      {100},                                             // input
      {8192},         {8192},                            // dense, leaky
      {128, 8, 8},    {128, 8, 8},                       // resize, bn(1e-5)
      {128, 16, 16},  {128, 16, 16}, {128, 16, 16}, {128, 16, 16},  // up, conv1, bn(0.8), leaky
      {128, 32, 32},  {64, 32, 32},  {64, 32, 32},  {64, 32, 32},   // up, conv2, bn(0.8), leaky
      {3, 32, 32},    {3, 32, 32},                       // conv3, tanh
  };
  EXPECT_EQ(spec.shape_trace(), expected);
  const auto* bn0 = std::get_if<BatchNormLayer>(&spec.layers[3]);
  const auto* bn1 = std::get_if<BatchNormLayer>(&spec.layers[6]);
  ASSERT_TRUE(bn0 && bn1);
  EXPECT_EQ(bn0->eps, 1e-5);
  EXPECT_EQ(bn1->eps, 0.8);
  EXPECT_EQ(bn1->momentum, 0.1);
  const auto* conv3 = std::get_if<ConvLayer>(&spec.layers[12]);
  ASSERT_TRUE(conv3);
  EXPECT_EQ(*conv3, (ConvLayer{64, 3, 3, 1, 1}));
}

TEST(Generator, SmallVariantShape) {
  EXPECT_EQ(generator_spec(16, 1, 4, 16).output_shape(), (Shape{1, 16, 16}));
}

TEST(Generator, OddWidthIsSpecError) { EXPECT_THROW(generator_spec(16, 1, 4, 15), SpecError); }

TEST(Generator, OutputsInTanhRange) {
  auto net = build_generator(16, 1, 4, 16, 2);
  Rng rng(0);
  auto out = net.infer(latents(2, 16, 3), Mode::train, rng);
  EXPECT_EQ(out.shape(), (Shape{2, 1, 16, 16}));
  for (double v : out.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Generator, BatchOfFour) {
  auto net = build_generator(16, 3, 4, 16, 2);
  Rng rng(0);
  EXPECT_EQ(net.infer(latents(4, 16, 3), Mode::train, rng).shape(), (Shape{4, 3, 16, 16}));
}

TEST(Generator, GoldenParameterCount) {
  // dense 100*8192+8192, bn 2*128, conv 128*128*9+128, bn 2*128,
  // conv 64*128*9+64, bn 2*64, conv 3*64*9+3
  const std::size_t expected = (100 * 8192 + 8192) + 256 + (128 * 128 * 9 + 128) + 256 + (64 * 128 * 9 + 64) + 128 +
                               (3 * 64 * 9 + 3);
  EXPECT_EQ(expected, 1051139u);
  EXPECT_EQ(build_generator(100, 3, 8, 128, 0).parameter_count(), expected);
}

TEST(Discriminator, WassersteinFlattenIs512) {
  const auto spec = discriminator_spec(3, 32, 16, CriticVariant::wasserstein);
  const auto* head = std::get_if<DenseLayer>(&spec.layers.back());
  ASSERT_NE(head, nullptr);
  EXPECT_EQ(head->in, 512u);
  EXPECT_EQ(spec.output_shape(), (Shape{1}));
  EXPECT_EQ(spec.final_activation, ActivationKind::none);
}

TEST(Discriminator, DcAt64PixelsFlattenIs2048) {
  const auto spec = discriminator_spec(3, 64, 16, CriticVariant::dc);
  const DenseLayer* head = nullptr;
  for (const auto& l : spec.layers)
    if (auto* d = std::get_if<DenseLayer>(&l)) head = d;
  ASSERT_NE(head, nullptr);
  EXPECT_EQ(head->in, 2048u);
  EXPECT_EQ(spec.final_activation, ActivationKind::sigmoid);
}

TEST(Discriminator, GoldenParameterCount) {
  // convs 3->16->32->64->128 (k3) with bn after the last three, dense 512->1
  const std::size_t expected = (16 * 3 * 9 + 16) + (32 * 16 * 9 + 32) + 64 + (64 * 32 * 9 + 64) + 128 +
                               (128 * 64 * 9 + 128) + 256 + (512 + 1);
  EXPECT_EQ(build_discriminator(3, 32, 16, CriticVariant::wasserstein, 0).parameter_count(), expected);
}

TEST(Discriminator, IndivisibleSpatialIsSpecError) {
  EXPECT_THROW(discriminator_spec(3, 30, 16, CriticVariant::dc), SpecError);
}

TEST(Discriminator, DcOutputIsProbability) {
  auto net = build_discriminator(1, 16, 16, CriticVariant::dc, 4);
  Rng rng(1);
  auto x = latents(8, 256, 5);
  for (auto& v : x.data()) v *= 50.0;
  auto out = net.infer(Tensor({8, 1, 16, 16}, {x.data().begin(), x.data().end()}), Mode::train, rng);
  for (double v : out.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Discriminator, WassersteinScoreLeavesUnitIntervalAfterAStep) {
  auto net = build_discriminator(1, 16, 16, CriticVariant::wasserstein, 4);
  Rng rng(1);
  Tensor x({4, 1, 16, 16}, std::vector<double>(4 * 256, 0.5));
  Graph g;
  auto loss = scale(g, mean(g, net.forward(g, x, Mode::train, rng)), -1.0);
  g.backward(loss);
  for (auto& p : net.params())
    for (std::size_t i = 0; i < p.tensor.numel(); ++i) p.tensor[i] -= 50.0 * p.tensor.grad()[i];
  Rng rng2(1);
  auto out = net.infer(x, Mode::train, rng2);
  double hi = -1e300;
  for (double v : out.data()) hi = std::max(hi, v);
  EXPECT_GT(hi, 1.0);
}

TEST(Network, WrongInputShapeIsDimensionError) {
  auto net = build_generator(16, 1, 4, 16, 2);
  Rng rng(0);
  EXPECT_THROW(net.infer(latents(2, 15, 3), Mode::train, rng), DimensionError);
}

TEST(Network, EvalForwardIsRepeatable) {
  auto net = build_discriminator(1, 16, 16, CriticVariant::wasserstein, 4);
  Rng warm(0);
  auto x = latents(4, 256, 6);
  const Tensor img({4, 1, 16, 16}, {x.data().begin(), x.data().end()});
  net.infer(img, Mode::train, warm);  // populate running statistics
  Rng a(1), b(2);
  EXPECT_TRUE(bitwise_equal(net.infer(img, Mode::eval, a), net.infer(img, Mode::eval, b)));
}

TEST(Network, TrainForwardReproducibleWithSameStream) {
  auto x = latents(4, 256, 6);
  const Tensor img({4, 1, 16, 16}, {x.data().begin(), x.data().end()});
  auto n1 = build_discriminator(1, 16, 16, CriticVariant::wasserstein, 4);
  auto n2 = build_discriminator(1, 16, 16, CriticVariant::wasserstein, 4);
  Rng a(9), b(9);
  EXPECT_TRUE(bitwise_equal(n1.infer(img, Mode::train, a), n2.infer(img, Mode::train, b)));
}

TEST(Network, ParameterNamesUniqueAndShapesFromSpec) {
  const auto spec = generator_spec(100, 3, 8, 128);
  const auto params = init_params(spec, 1);
  const auto shapes = parameter_shapes(spec);
  ASSERT_EQ(params.size(), shapes.size());
  std::set<std::string> names;
  for (std::size_t i = 0; i < params.size(); ++i) {
    names.insert(params[i].name);
    EXPECT_EQ(params[i].name, shapes[i].first);
    EXPECT_EQ(params[i].tensor.shape(), shapes[i].second);
  }
  EXPECT_EQ(names.size(), params.size());
}

TEST(Network, StateRoundTripRejectsMismatch) {
  auto a = build_generator(16, 1, 4, 16, 1);
  auto b = build_generator(16, 1, 4, 16, 2);
  b.load_state(a.state());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    EXPECT_TRUE(bitwise_equal(a.params()[i].tensor, b.params()[i].tensor));
  auto bad = a.state();
  bad.pop_back();
  EXPECT_THROW(b.load_state(bad), FormatError);
}

TEST(Network, CopiesAreDeep) {
  auto a = build_generator(16, 1, 4, 16, 1);
  Network b = a;
  b.params()[0].tensor[0] += 1.0;
  EXPECT_NE(a.params()[0].tensor[0], b.params()[0].tensor[0]);
}

TEST(Init, SameSeedBitwiseIdentical) {
  const auto spec = generator_spec(16, 1, 4, 16);
  const auto a = init_params(spec, 7);
  const auto b = init_params(spec, 7);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bitwise_equal(a[i].tensor, b[i].tensor));
}

TEST(Init, BetaAndBiasZeroGammaNearOne) {
  for (const auto& p : init_params(generator_spec(100, 3, 8, 128), 3)) {
    const bool zero = p.name.ends_with(".beta") || p.name.ends_with(".bias");
    for (double v : p.tensor.data()) {
      if (zero) EXPECT_EQ(v, 0.0) << p.name;
      if (p.name.ends_with(".gamma")) EXPECT_NEAR(v, 1.0, 0.2) << p.name;
    }
  }
}

TEST(Init, WeightMomentsConcentrate) {
  const auto params = init_params(generator_spec(100, 3, 8, 128), 11);
  const auto& w = params.front().tensor;  // 100×8192 dense weight
  ASSERT_GE(w.numel(), 10000u);
  double m = 0.0;
  for (double v : w.data()) m += v;
  m /= static_cast<double>(w.numel());
  double var = 0.0;
  for (double v : w.data()) var += (v - m) * (v - m);
  const double sd = std::sqrt(var / static_cast<double>(w.numel() - 1));
  EXPECT_NEAR(m, 0.0, 0.001);
  EXPECT_NEAR(sd, 0.02, 0.002);
}

TEST(Spec, TextRoundTrip) {
  for (const auto& spec : {generator_spec(100, 3, 8, 128), discriminator_spec(3, 32, 16, CriticVariant::dc),
                           mlp_generator_spec(8, 2, 32, 2), mlp_discriminator_spec(2, 32, 2, CriticVariant::wasserstein),
                           mlp_classifier_spec(2, 16, 8, 4)}) {
    EXPECT_EQ(ModelSpec::from_text(spec.to_text()), spec);
  }
  EXPECT_THROW(ModelSpec::from_text("kind nonsense\nend\n"), SpecError);
}

TEST(Spec, WassersteinHeadIsNoneExactly) {
  EXPECT_EQ(discriminator_spec(1, 16, 16, CriticVariant::wasserstein).final_activation, ActivationKind::none);
  EXPECT_EQ(discriminator_spec(1, 16, 16, CriticVariant::dc).final_activation, ActivationKind::sigmoid);
  EXPECT_EQ(mlp_discriminator_spec(2, 8, 1, CriticVariant::wasserstein).final_activation, ActivationKind::none);
}

TEST(Spec, ValidateCatchesBrokenStack) {
  auto spec = generator_spec(16, 1, 4, 16);
  spec.layers.pop_back();  // drop the tanh
  EXPECT_THROW(spec.validate(), SpecError);
}
