#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "factorkit/graph.hpp"
#include "factorkit/shape.hpp"

namespace factorkit {

// Output shape of `layer` given its input shapes (one per LayerSpec::inputs).
// Floor arithmetic for conv and pooling windows. Throws SpecError naming the
// layer when the kernel exceeds the padded input or concat spatial dims differ.
Shape infer_shape(const LayerSpec& layer, std::span<const Shape> inputs);
Shape infer_shape(const LayerSpec& layer, const Shape& input);

// kh*kw*Cin*Cout (+Cout with bias) for conv, zero otherwise.
std::int64_t count_weights(const LayerSpec& layer, std::int64_t in_channels);

// kh*kw*Cin*Cout*H'*W' for conv, zero otherwise. Bias adds are not MACs.
std::int64_t count_macs(const LayerSpec& layer, const Shape& input);

// Comparisons, copies, and bias adds; reported beside MACs, never inside them.
std::int64_t count_non_mac_ops(const LayerSpec& layer, std::span<const Shape> inputs,
                               const Shape& output);

struct LayerCost {
  std::string name;
  LayerKind kind;
  std::string factor;  // empty for stem / trailing
  Shape output;
  std::int64_t weights = 0;
  std::int64_t macs = 0;
  std::int64_t non_mac_ops = 0;
};

struct OutputFeature {
  std::string name;
  Shape shape;
};

struct CostReport {
  std::string model;
  Shape input;
  std::vector<LayerCost> per_layer;  // topological order
  std::vector<OutputFeature> outputs;
  std::int64_t total_weights = 0;
  std::int64_t total_macs = 0;
  std::int64_t total_features = 0;         // sum of C*H*W over graph outputs
  std::int64_t total_output_channels = 0;  // sum of C over graph outputs
};

// Shapes for every layer, indexed like GraphSpec::layers.
std::vector<Shape> infer_shapes(const GraphSpec& graph, const GraphIndex& index);

CostReport analyze(const GraphSpec& graph);

struct ComparisonRow {
  std::string model;
  std::int64_t total_weights = 0;
  std::int64_t total_macs = 0;
  std::int64_t total_features = 0;
  std::int64_t total_output_channels = 0;
  double weight_ratio = 1.0;   // baseline / model
  double mac_ratio = 1.0;      // baseline / model
  double feature_ratio = 1.0;  // model / baseline
};

struct ComparisonReport {
  std::string baseline;
  std::vector<ComparisonRow> rows;
};

// Throws SpecError when input shapes differ or the baseline is absent.
ComparisonReport compare(std::span<const GraphSpec> graphs, const std::string& baseline);
ComparisonReport compare(std::span<const CostReport> reports, const std::string& baseline);

// CSV writers. Columns:
//   analyze: layer,kind,factor,out_c,out_h,out_w,weights,macs,non_mac_ops
//   compare: model,total_weights,total_macs,total_features,total_output_channels,
//            weight_ratio,mac_ratio,feature_ratio
void write_cost_csv(std::ostream& os, const CostReport& report);
void write_comparison_csv(std::ostream& os, const ComparisonReport& report);
void write_comparison_table(std::ostream& os, const ComparisonReport& report);

}  // namespace factorkit
