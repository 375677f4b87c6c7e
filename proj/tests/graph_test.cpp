#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "factorkit/error.hpp"
#include "factorkit/graph.hpp"
#include "factorkit/model_format.hpp"
#include "factorkit/zoo.hpp"
#include "support/random_graphs.hpp"

namespace factorkit {
namespace {

GraphSpec chain() {
  GraphSpec g;
  g.name = "chain";
  g.input_shape = {3, 8, 8};
  g.layers = {make_conv("a", "@input", {3, 3}, {1, 1}, {1, 1}, 4), make_relu("b", "a"),
              make_maxpool("c", "b", {2, 2}, {2, 2}, {0, 0})};
  return g;
}

bool has(const std::vector<Violation>& v, ViolationKind k) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == k; });
}

TEST(Validate, ZooBuildersAreValid) {
  for (auto m : {ZooModel::GoogleNet4e, ZooModel::FactorNetV1, ZooModel::FactorNetV2})
    for (Ratio r : {Ratio{1, 1}, Ratio{1, 2}, Ratio{1, 4}, Ratio{1, 8}})
      EXPECT_TRUE(validate(build_model({m, r})).empty()) << to_string(m) << " " << r.num << "/" << r.den;
}

TEST(Validate, SelfLoopIsASingleCycle) {
  GraphSpec g = chain();
  g.layers[1].inputs = {"b"};
  const auto v = validate(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::CycleAt);
  EXPECT_EQ(v[0].layers, std::vector<std::string>{"b"});
}

TEST(Validate, TwoLayerCycleNamesBothLayers) {
  GraphSpec g = chain();
  g.layers[0].inputs = {"c"};
  const auto v = validate(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::CycleAt);
  EXPECT_EQ(v[0].layers, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Validate, FactorsSharingALayerOverlap) {
  GraphSpec g;
  g.name = "overlap";
  g.input_shape = {3, 8, 8};
  g.layers = {make_conv("shared", "@input", {1, 1}, {1, 1}, {0, 0}, 2)};
  g.factors = {{"f1", {"shared"}}, {"f2", {"shared"}}};
  const auto v = validate(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::FactorOverlap);
}

TEST(Validate, ReportsDanglingAndDuplicate) {
  GraphSpec g = chain();
  g.layers.push_back(make_relu("b", "ghost"));
  const auto v = validate(g);
  EXPECT_TRUE(has(v, ViolationKind::DuplicateName));
  EXPECT_TRUE(has(v, ViolationKind::DanglingInput));
}

TEST(Validate, CrossFactorEdge) {
  GraphSpec g;
  g.name = "cross";
  g.input_shape = {1, 4, 4};
  g.layers = {make_relu("a1", "@input"), make_relu("a2", "a1"), make_relu("b1", "@input"),
              make_concat("b2", {"b1", "a2"})};
  g.factors = {{"fa", {"a1", "a2"}}, {"fb", {"b1", "b2"}}};
  const auto v = validate(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::CrossFactorEdge);
  EXPECT_EQ(v[0].layers, (std::vector<std::string>{"a2", "b2"}));
}

TEST(Validate, FactorEntryMustReadStemOutput) {
  GraphSpec g;
  g.name = "entry";
  g.input_shape = {1, 4, 4};
  g.layers = {make_relu("s1", "@input"), make_relu("s2", "s1"), make_relu("f", "s1")};
  g.factors = {{"f", {"f"}}};
  EXPECT_TRUE(has(validate(g), ViolationKind::FactorEntryInput));
}

TEST(Validate, ArityAndHyperparameters) {
  GraphSpec g = chain();
  g.layers[0].out_channels = 0;
  g.layers[1].inputs = {"a", "a"};
  g.layers[2].stride = {0, 1};
  const auto v = validate(g);
  EXPECT_TRUE(has(v, ViolationKind::BadArity));
  EXPECT_EQ(std::count_if(v.begin(), v.end(),
                          [](const Violation& x) { return x.kind == ViolationKind::BadHyperparameter; }),
            2);
}

TEST(Validate, TrailingMustMergeEveryExit) {
  GraphSpec g;
  g.name = "trail";
  g.input_shape = {1, 4, 4};
  g.layers = {make_relu("a", "@input"), make_relu("b", "@input"), make_concat("m", {"a"})};
  g.factors = {{"fa", {"a"}}, {"fb", {"b"}}};
  g.trailing = "m";
  EXPECT_TRUE(has(validate(g), ViolationKind::BadTrailing));
  g.layers[2].inputs = {"a", "b"};
  EXPECT_TRUE(validate(g).empty());
  EXPECT_EQ(output_names(g), std::vector<std::string>{"m"});
}

TEST(Validate, EmptyGraph) {
  GraphSpec g;
  g.input_shape = {1, 1, 1};
  const auto v = validate(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::EmptyGraph);
}

TEST(TopoOrder, LinearChain) {
  EXPECT_EQ(topo_order(chain()), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(TopoOrder, DiamondUsesDeclarationOrder) {
  GraphSpec g;
  g.name = "diamond";
  g.input_shape = {1, 4, 4};
  g.layers = {make_relu("a", "@input"), make_relu("b", "a"), make_relu("c", "a"), make_concat("d", {"c", "b"})};
  EXPECT_EQ(topo_order(g), (std::vector<std::string>{"a", "b", "c", "d"}));
  // Declaring d first does not change the dependency-respecting order.
  std::rotate(g.layers.begin(), g.layers.begin() + 3, g.layers.end());
  EXPECT_EQ(topo_order(g), (std::vector<std::string>{"a", "b", "c", "d"}));
}

TEST(TopoOrder, RejectsInvalidGraph) {
  GraphSpec g = chain();
  g.layers[0].inputs = {"a"};
  EXPECT_THROW(topo_order(g), SpecError);
}

TEST(TopoOrder, FactorNetV2RunsFactorsInDeclarationOrder) {
  const GraphSpec g = build_factornet_v2({ZooModel::FactorNetV2});
  std::vector<std::string> expected;
  for (const auto& f : g.factors) expected.insert(expected.end(), f.body.begin(), f.body.end());
  EXPECT_EQ(topo_order(g), expected);
}

TEST(TopoOrder, PermutationRespectingEdgesOnRandomGraphs) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const GraphSpec g = testing::random_graph(rng);
    ASSERT_TRUE(validate(g).empty());
    const auto order = topo_order(g);
    ASSERT_EQ(order.size(), g.layers.size());
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    ASSERT_EQ(pos.size(), g.layers.size());
    for (const auto& l : g.layers)
      for (const auto& in : l.inputs)
        if (in != kGraphInput) EXPECT_LT(pos.at(in), pos.at(l.name));
  }
}

TEST(Factors, ZooFactorsDisjointAndConcatFree) {
  for (auto m : {ZooModel::FactorNetV1, ZooModel::FactorNetV2}) {
    const GraphSpec g = build_model({m});
    ASSERT_EQ(g.factors.size(), 4u);
    std::map<std::string, int> seen;
    for (const auto& f : g.factors)
      for (const auto& n : f.body) {
        EXPECT_EQ(++seen[n], 1) << n;
        EXPECT_NE(g.find(n)->kind, LayerKind::ConcatChannels);
      }
  }
}

// ---- text format ------------------------------------------------------------

TEST(ModelFormat, ParsesEveryStatement) {
  const GraphSpec g = parse_model(R"(# demo
model demo
input 3x16x16
conv stem in=@input k=3x3 s=1x1 p=1x1 out=8 bias=1   # trailing comment
factor left {
  maxpool l1 in=stem k=3x3 s=2x2 p=1x1
  conv l2 in=l1 k=1x1 out=4 bias=0
}
factor right {
  relu r1 in=stem
  maxpool r2 in=r1 k=2x2 s=2x2
  conv r3 in=r2 k=1x1 out=4
}
concat merged in=l2,r3
)");
  EXPECT_EQ(g.name, "demo");
  EXPECT_EQ(g.input_shape, (Shape{3, 16, 16}));
  ASSERT_EQ(g.layers.size(), 7u);
  ASSERT_EQ(g.factors.size(), 2u);
  EXPECT_EQ(g.factors[1].body, (std::vector<std::string>{"r1", "r2", "r3"}));
  EXPECT_EQ(g.trailing, std::optional<std::string>("merged"));
  EXPECT_FALSE(g.find("l2")->has_bias);
  EXPECT_TRUE(g.find("r3")->has_bias);
  EXPECT_EQ(g.find("r2")->padding, (Extent{0, 0}));
  EXPECT_TRUE(validate(g).empty());
}

TEST(ModelFormat, RejectsUnknownKeysAndStatements) {
  EXPECT_THROW(parse_model("input 3x4x4\nconv a in=@input k=1x1 out=2 dilation=2\n"), SpecError);
  EXPECT_THROW(parse_model("input 3x4x4\ngroupconv a in=@input\n"), SpecError);
  EXPECT_THROW(parse_model("input 3x4x4\nrelu a in=@input k=3x3\n"), SpecError);
  EXPECT_THROW(parse_model("input 3x4x4\nconv a in=@input k=1x1 out=2 out=3\n"), SpecError);
  EXPECT_THROW(parse_model("input 3x4x4\nconv a in=@input k=1x1\n"), SpecError);
  EXPECT_THROW(parse_model("relu a in=@input\n"), SpecError);
  EXPECT_THROW(parse_model("input 3x4x4\nfactor f {\nrelu a in=@input\n"), SpecError);
  EXPECT_THROW(parse_model("input 3x4x4\nrelu a in=x,y\n"), SpecError);
  EXPECT_THROW(parse_model("input 3x4\n"), SpecError);
}

TEST(ModelFormat, ErrorNamesTheLine) {
  try {
    parse_model("input 3x4x4\n\nrelu a in=@input bogus=1\n");
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ModelFormat, ParserKeepsCyclesForValidate) {
  const GraphSpec g = parse_model("input 1x4x4\nrelu x in=x\n");
  const auto v = validate(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::CycleAt);
}

TEST(ModelFormat, RoundTripZoo) {
  for (auto m : {ZooModel::GoogleNet4e, ZooModel::FactorNetV1, ZooModel::FactorNetV2}) {
    const GraphSpec g = build_model({m, {1, 4}, {3, 270, 480}});
    EXPECT_EQ(parse_model(export_model(g)), g) << to_string(m);
  }
}

TEST(ModelFormat, RoundTripRandomGraphs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const GraphSpec g = testing::random_graph(rng);
    EXPECT_EQ(parse_model(export_model(g)), g) << export_model(g);
  }
}

}  // namespace
}  // namespace factorkit
