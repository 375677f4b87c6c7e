#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "factorkit/cost.hpp"
#include "factorkit/error.hpp"
#include "factorkit/engine.hpp"
#include "factorkit/zoo.hpp"
#include "support/conv_oracle.hpp"
#include "support/random_graphs.hpp"

namespace factorkit {
namespace {

Tensor make(Dims d, std::vector<float> v) { return Tensor(d, std::move(v)); }

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Conv, Identity1x1) {
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_tensor(rng, {1, 3, 5, 4});
  ConvParams p{Tensor({3, 3, 1, 1}), {}};
  for (int c = 0; c < 3; ++c) p.weight.at(c, c, 0, 0) = 1.0f;
  const auto y = conv2d_forward(x, p, make_conv("c", "@input", {1, 1}, {1, 1}, {0, 0}, 3, false));
  EXPECT_TRUE(bitwise_equal(x, y));
}

TEST(Conv, ZeroWeightsYieldBias) {
  std::mt19937_64 rng(2);
  const Tensor x = testing::random_tensor(rng, {1, 2, 6, 6});
  ConvParams p{Tensor({2, 2, 3, 3}), {0.5f, -1.5f}};
  const auto y = conv2d_forward(x, p, make_conv("c", "@input", {3, 3}, {1, 1}, {1, 1}, 2));
  for (std::int64_t h = 0; h < 6; ++h)
    for (std::int64_t w = 0; w < 6; ++w) {
      EXPECT_EQ(y.at(0, 0, h, w), 0.5f);
      EXPECT_EQ(y.at(0, 1, h, w), -1.5f);
    }
}

TEST(Conv, TwoByTwoExample) {
  const Tensor x = make({1, 1, 2, 2}, {1, 2, 3, 4});
  ConvParams p{make({1, 1, 2, 2}, {1, 0, 0, 1}), {}};
  const auto y = conv2d_forward(x, p, make_conv("c", "@input", {2, 2}, {1, 1}, {0, 0}, 1, false));
  EXPECT_EQ(y.dims(), (Dims{1, 1, 1, 1}));
  EXPECT_EQ(values(y), std::vector<float>{5});
}

TEST(Conv, MatchesOracleOnRandomCases) {
  std::mt19937_64 rng(20240601);
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<std::int64_t> c(1, 8), hw(5, 20);
    const Shape in{c(rng), hw(rng), hw(rng)};
    const LayerSpec spec = testing::random_conv_spec(rng, in);
    const Tensor x = testing::random_tensor(rng, {1, in.channels, in.height, in.width});
    const ConvParams p = testing::random_conv_params(rng, spec, in.channels);
    const Tensor got = conv2d_forward(x, p, spec);
    const Tensor want = testing::conv2d_oracle(x, p, spec);
    ASSERT_EQ(got.dims().shape(), infer_shape(spec, in));
    ASSERT_EQ(got.dims(), want.dims());
    EXPECT_LE(max_abs_diff(got, want), 1e-5f) << "case " << t;
  }
}

TEST(Conv, WrongWeightDimsThrow) {
  const Tensor x({1, 3, 4, 4});
  ConvParams p{Tensor({2, 2, 1, 1}), {0, 0}};
  EXPECT_THROW(conv2d_forward(x, p, make_conv("c", "@input", {1, 1}, {1, 1}, {0, 0}, 2)), SpecError);
}

TEST(Conv, ScalarBackward) {
  const Tensor x = make({1, 1, 1, 1}, {3});
  ConvParams p{make({1, 1, 1, 1}, {2}), {0}};
  const auto spec = make_conv("c", "@input", {1, 1}, {1, 1}, {0, 0}, 1);
  const auto g = conv2d_backward(x, p, spec, make({1, 1, 1, 1}, {5}));
  EXPECT_EQ(g.weight.at(0, 0, 0, 0), 15.0f);
  EXPECT_EQ(g.input.at(0, 0, 0, 0), 10.0f);
  EXPECT_EQ(g.bias, std::vector<float>{5});
}

TEST(Conv, BackwardOfZeroGradientIsZero) {
  std::mt19937_64 rng(3);
  const Shape in{3, 9, 9};
  const LayerSpec spec = testing::random_conv_spec(rng, in);
  const Tensor x = testing::random_tensor(rng, {1, 3, 9, 9});
  const ConvParams p = testing::random_conv_params(rng, spec, 3);
  const Shape out = infer_shape(spec, in);
  const auto g = conv2d_backward(x, p, spec, Tensor({1, out.channels, out.height, out.width}));
  for (float v : g.input.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g.weight.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g.bias) EXPECT_EQ(v, 0.0f);
}

// dL/dx and dL/dw for L = sum(g * conv(x)), computed with the oracle by
// linearity: each entry is a directional derivative along a basis vector.
TEST(Conv, BackwardMatchesOracleLinearity) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const Shape in{2, 7, 6};
    const LayerSpec spec = testing::random_conv_spec(rng, in);
    const Tensor x = testing::random_tensor(rng, {1, 2, 7, 6});
    ConvParams p = testing::random_conv_params(rng, spec, 2);
    const Shape out = infer_shape(spec, in);
    const Tensor go = testing::random_tensor(rng, {1, out.channels, out.height, out.width});
    const auto g = conv2d_backward(x, p, spec, go);
    auto loss = [&](const Tensor& xx, const ConvParams& pp) {
      const Tensor y = testing::conv2d_oracle(xx, pp, spec);
      double s = 0;
      for (std::int64_t i = 0; i < y.size(); ++i) s += double(y.data()[i]) * go.data()[i];
      return s;
    };
    ConvParams zero_bias = p;
    std::fill(zero_bias.bias.begin(), zero_bias.bias.end(), 0.0f);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      Tensor e(x.dims());
      e.data()[i] = 1.0f;
      EXPECT_NEAR(g.input.data()[i], loss(e, zero_bias), 1e-4);
    }
    ConvParams unit = zero_bias;
    for (std::int64_t i = 0; i < p.weight.size(); ++i) {
      std::fill(unit.weight.data().begin(), unit.weight.data().end(), 0.0f);
      unit.weight.data()[i] = 1.0f;
      EXPECT_NEAR(g.weight.data()[i], loss(x, unit), 1e-4);
    }
  }
}

TEST(MaxPool, RampExample) {
  std::vector<float> v(16);
  std::iota(v.begin(), v.end(), 1.0f);
  const auto r = maxpool_forward(make({1, 1, 4, 4}, v), make_maxpool("p", "@input", {2, 2}, {2, 2}, {0, 0}));
  EXPECT_EQ(values(r.output), (std::vector<float>{6, 8, 14, 16}));
  EXPECT_EQ(r.argmax, (std::vector<std::int64_t>{5, 7, 13, 15}));
}

TEST(MaxPool, PaddingNeverWins) {
  const auto r = maxpool_forward(make({1, 1, 2, 2}, {-4, -3, -2, -1}),
                                 make_maxpool("p", "@input", {3, 3}, {1, 1}, {1, 1}));
  EXPECT_EQ(values(r.output), (std::vector<float>{-1, -1, -1, -1}));
}

TEST(MaxPool, TiesKeepFirstInScanOrder) {
  const auto r = maxpool_forward(make({1, 1, 2, 2}, {7, 7, 7, 7}),
                                 make_maxpool("p", "@input", {2, 2}, {1, 1}, {0, 0}));
  EXPECT_EQ(r.argmax, std::vector<std::int64_t>{0});
}

TEST(MaxPool, AllPaddingWindowThrows) {
  EXPECT_THROW(maxpool_forward(Tensor({1, 1, 1, 1}), make_maxpool("p", "@input", {1, 1}, {1, 1}, {1, 1})),
               SpecError);
}

TEST(MaxPool, BackwardConservesMass) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Tensor x = testing::random_tensor(rng, {1, 3, 11, 9});
    const auto spec = make_maxpool("p", "@input", {3, 3}, {2, 2}, {1, 1});
    const auto r = maxpool_forward(x, spec);
    const Tensor go = testing::random_tensor(rng, r.output.dims());
    const Tensor gi = maxpool_backward(x.dims(), r.argmax, go);
    double a = 0, b = 0;
    for (float v : go.data()) a += v;
    for (float v : gi.data()) b += v;
    EXPECT_NEAR(a, b, 1e-4);
  }
}

TEST(Relu, Example) {
  EXPECT_EQ(values(relu_forward(make({1, 3, 1, 1}, {-1, 0, 2}))), (std::vector<float>{0, 0, 2}));
}

TEST(Relu, Idempotent) {
  std::mt19937_64 rng(6);
  const Tensor x = testing::random_tensor(rng, {1, 4, 5, 6});
  const Tensor once = relu_forward(x);
  EXPECT_TRUE(bitwise_equal(once, relu_forward(once)));
}

TEST(Relu, BackwardMasksNonPositive) {
  const Tensor g = relu_backward(make({1, 3, 1, 1}, {-1, 0, 2}), make({1, 3, 1, 1}, {4, 5, 6}));
  EXPECT_EQ(values(g), (std::vector<float>{0, 0, 6}));
}

TEST(Concat, ChannelsStackAndSlicesRecover) {
  std::mt19937_64 rng(7);
  const Tensor a = testing::random_tensor(rng, {1, 2, 2, 2});
  const Tensor b = testing::random_tensor(rng, {1, 3, 2, 2});
  const Tensor y = concat_forward(std::vector<Tensor>{a, b});
  EXPECT_EQ(y.dims(), (Dims{1, 5, 2, 2}));
  const std::vector<std::int64_t> ch = {2, 3};
  const auto parts = concat_backward(y, ch);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_TRUE(bitwise_equal(parts[0], a));
  EXPECT_TRUE(bitwise_equal(parts[1], b));
}

TEST(Concat, SpatialMismatchThrows) {
  EXPECT_THROW(concat_forward(std::vector<Tensor>{Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 3})}), SpecError);
}

TEST(InitParams, DeterministicAndBounded) {
  const GraphSpec g = build_factornet_v1({ZooModel::FactorNetV1, {1, 8}, {3, 64, 64}});
  const Parameters a = init_params(g, 42), b = init_params(g, 42), c = init_params(g, 43);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  const CompiledGraph cg(g);
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (l.kind != LayerKind::Conv) continue;
    const auto& pa = a.at(l.name);
    EXPECT_TRUE(bitwise_equal(pa.weight, b.at(l.name).weight));
    differs |= !bitwise_equal(pa.weight, c.at(l.name).weight);
    const double bound = std::sqrt(6.0 / double(cg.in_channels(i) * l.kernel.h * l.kernel.w));
    for (float v : pa.weight.data()) EXPECT_LE(std::abs(v), bound);
    for (float v : pa.bias) EXPECT_EQ(v, 0.0f);
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(parameter_count(a), analyze(g).total_weights);
}

TEST(Forward, OutputShapesMatchAnalyzer) {
  for (auto m : {ZooModel::GoogleNet4e, ZooModel::FactorNetV1, ZooModel::FactorNetV2}) {
    const GraphSpec g = build_model({m, {1, 8}, {3, 64, 96}});
    const auto report = analyze(g);
    std::mt19937_64 rng(8);
    const auto outs = forward(g, init_params(g, 1), testing::random_tensor(rng, {1, 3, 64, 96}, 0, 1));
    ASSERT_EQ(outs.size(), report.outputs.size());
    for (std::size_t i = 0; i < outs.size(); ++i) {
      EXPECT_EQ(outs[i].dims().shape(), report.outputs[i].shape);
      EXPECT_TRUE(all_finite(outs[i]));
    }
  }
}

TEST(Forward, StatsMatchAnalyzerMacs) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    const GraphSpec g = testing::random_graph(rng);
    const CompiledGraph cg(g);
    const auto params = init_params(cg, t);
    const auto& s = g.input_shape;
    ExecStats stats = make_stats(cg);
    forward(cg, params, testing::random_tensor(rng, {1, s.channels, s.height, s.width}), nullptr, &stats);
    EXPECT_EQ(std::accumulate(stats.macs.begin(), stats.macs.end(), std::int64_t{0}), analyze(g).total_macs);
  }
}

TEST(Forward, RejectsWrongInputShapeAndMissingParams) {
  const GraphSpec g = build_factornet_v2({ZooModel::FactorNetV2, {1, 8}, {3, 32, 32}});
  const auto params = init_params(g, 1);
  EXPECT_THROW(forward(g, params, Tensor({1, 3, 32, 31})), SpecError);
  Parameters missing = params;
  missing.erase(missing.begin());
  EXPECT_THROW(forward(g, missing, Tensor({1, 3, 32, 32})), SpecError);
}

TEST(Forward, GraphSingleConvMatchesKernel) {
  std::mt19937_64 rng(10);
  GraphSpec g;
  g.name = "one";
  g.input_shape = {3, 10, 12};
  g.layers = {make_conv("c", "@input", {3, 3}, {2, 1}, {1, 1}, 5)};
  const auto params = init_params(g, 3);
  const Tensor x = testing::random_tensor(rng, {1, 3, 10, 12});
  const auto outs = forward(g, params, x);
  ASSERT_EQ(outs.size(), 1u);
  EXPECT_TRUE(bitwise_equal(outs[0], conv2d_forward(x, params.at("c"), g.layers[0])));
}

}  // namespace
}  // namespace factorkit
