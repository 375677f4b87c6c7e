#include <gtest/gtest.h>

#include "factorkit/cost.hpp"
#include "factorkit/error.hpp"
#include "factorkit/zoo.hpp"

namespace factorkit {
namespace {

Shape shape_of(const CostReport& r, const std::string& name) {
  for (const auto& row : r.per_layer)
    if (row.name == name) return row.output;
  ADD_FAILURE() << "no layer " << name;
  return {};
}

TEST(Zoo, NamesRoundTrip) {
  for (auto m : {ZooModel::GoogleNet4e, ZooModel::FactorNetV1, ZooModel::FactorNetV2})
    EXPECT_EQ(parse_zoo_model(to_string(m)), m);
  EXPECT_FALSE(parse_zoo_model("resnet50").has_value());
}

TEST(Zoo, Inception3aHas256Channels) {
  const auto r = analyze(build_googlenet4e({}));
  EXPECT_EQ(shape_of(r, "inception_3a_output").channels, 256);
  EXPECT_EQ(shape_of(r, "inception_3b_output").channels, 480);
  EXPECT_EQ(shape_of(r, "inception_4a_output").channels, 512);
  EXPECT_EQ(shape_of(r, "inception_4e_output"), (Shape{832, 67, 120}));
  EXPECT_EQ(shape_of(r, "conv1"), (Shape{64, 540, 960}));
  EXPECT_EQ(shape_of(r, "pool2"), (Shape{192, 135, 240}));
}

TEST(Zoo, GoogleNetIsMonolithic) {
  EXPECT_TRUE(build_googlenet4e({}).factors.empty());
}

TEST(Zoo, FactorNetsHaveFourFactorsEndingAt67x120) {
  for (auto m : {ZooModel::FactorNetV1, ZooModel::FactorNetV2}) {
    const GraphSpec g = build_model({m});
    ASSERT_EQ(g.factors.size(), 4u);
    EXPECT_FALSE(g.trailing.has_value());
    const auto r = analyze(g);
    ASSERT_EQ(r.outputs.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(r.outputs[i].name, g.factors[i].body.back());
      EXPECT_EQ(r.outputs[i].shape.height, 67);
      EXPECT_EQ(r.outputs[i].shape.width, 120);
    }
  }
}

TEST(Zoo, FactorNetV2HasNoStem) {
  const GraphSpec g = build_factornet_v2({ZooModel::FactorNetV2});
  const GraphIndex idx = GraphIndex::build(g);
  EXPECT_TRUE(idx.stem_order.empty());
  for (const auto& f : g.factors) EXPECT_EQ(g.find(f.body.front())->inputs[0], kGraphInput);
}

TEST(Zoo, FactorNetV1SharesGoogleNetStem) {
  const GraphSpec v1 = build_factornet_v1({ZooModel::FactorNetV1});
  const GraphSpec gn = build_googlenet4e({});
  const GraphIndex idx = GraphIndex::build(v1);
  ASSERT_FALSE(idx.stem_order.empty());
  for (auto i : idx.stem_order) {
    const LayerSpec* other = gn.find(v1.layers[i].name);
    ASSERT_NE(other, nullptr) << v1.layers[i].name;
    EXPECT_EQ(*other, v1.layers[i]);
  }
  EXPECT_EQ(v1.layers[idx.stem_order.back()].name, "pool2");
}

TEST(Zoo, WidthMultiplierScalesChannelsOnly) {
  for (auto m : {ZooModel::GoogleNet4e, ZooModel::FactorNetV1, ZooModel::FactorNetV2}) {
    const auto full = analyze(build_model({m}));
    const auto quarter = analyze(build_model({m, {1, 4}}));
    ASSERT_EQ(full.per_layer.size(), quarter.per_layer.size());
    for (std::size_t i = 0; i < full.per_layer.size(); ++i) {
      EXPECT_EQ(full.per_layer[i].output.height, quarter.per_layer[i].output.height);
      EXPECT_EQ(full.per_layer[i].output.width, quarter.per_layer[i].output.width);
      EXPECT_LE(quarter.per_layer[i].output.channels, full.per_layer[i].output.channels);
    }
    EXPECT_LT(quarter.total_weights, full.total_weights);
  }
  EXPECT_EQ(analyze(build_googlenet4e({ZooModel::GoogleNet4e, {1, 4}})).outputs[0].shape.channels, 208);
}

TEST(Zoo, RatioScaleRoundsAndNeverDropsBelowOne) {
  EXPECT_EQ((Ratio{1, 4}).scale(64), 16);
  EXPECT_EQ((Ratio{1, 4}).scale(6), 2);
  EXPECT_EQ((Ratio{1, 8}).scale(3), 1);
  EXPECT_EQ((Ratio{1, 1}).scale(832), 832);
}

TEST(Zoo, ParseRatio) {
  EXPECT_EQ(parse_ratio("1/4"), (Ratio{1, 4}));
  EXPECT_EQ(parse_ratio("1"), (Ratio{1, 1}));
  EXPECT_THROW(parse_ratio("3/2"), SpecError);
  EXPECT_THROW(parse_ratio("0/2"), SpecError);
  EXPECT_THROW(parse_ratio("1/0"), SpecError);
  EXPECT_THROW(parse_ratio("a/b"), SpecError);
}

TEST(Zoo, SmallInputsStillBuild) {
  for (auto m : {ZooModel::GoogleNet4e, ZooModel::FactorNetV1, ZooModel::FactorNetV2}) {
    const auto r = analyze(build_model({m, {1, 8}, {3, 32, 32}}));
    for (const auto& o : r.outputs) {
      EXPECT_EQ(o.shape.height, 1);
      EXPECT_EQ(o.shape.width, 2);
    }
  }
}

}  // namespace
}  // namespace factorkit
