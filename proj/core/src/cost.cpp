#include "factorkit/cost.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "factorkit/error.hpp"

namespace factorkit {
namespace {

std::int64_t window_out(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Shape infer_shape(const LayerSpec& layer, std::span<const Shape> inputs) {
  if (inputs.empty()) throw SpecError("layer '" + layer.name + "' has no input shapes");
  const Shape& in = inputs.front();
  switch (layer.kind) {
    case LayerKind::ReLU:
      return in;
    case LayerKind::ConcatChannels: {
      Shape out{0, in.height, in.width};
      for (const auto& s : inputs) {
        if (s.height != in.height || s.width != in.width)
          throw SpecError("concat '" + layer.name + "': spatial mismatch " + to_string(in) +
                          " vs " + to_string(s));
        out.channels += s.channels;
      }
      return out;
    }
    case LayerKind::Conv:
    case LayerKind::MaxPool: {
      if (in.height + 2 * layer.padding.h < layer.kernel.h ||
          in.width + 2 * layer.padding.w < layer.kernel.w)
        throw SpecError("layer '" + layer.name + "': kernel " + std::to_string(layer.kernel.h) +
                        "x" + std::to_string(layer.kernel.w) + " exceeds padded input " +
                        to_string(in));
      Shape out;
      out.height = window_out(in.height, layer.kernel.h, layer.stride.h, layer.padding.h);
      out.width = window_out(in.width, layer.kernel.w, layer.stride.w, layer.padding.w);
      out.channels = layer.kind == LayerKind::Conv ? layer.out_channels : in.channels;
      return out;
    }
  }
  throw SpecError("layer '" + layer.name + "': unknown kind");
}

Shape infer_shape(const LayerSpec& layer, const Shape& input) {
  return infer_shape(layer, std::span<const Shape>(&input, 1));
}

std::int64_t count_weights(const LayerSpec& layer, std::int64_t in_channels) {
  if (layer.kind != LayerKind::Conv) return 0;
  return layer.kernel.h * layer.kernel.w * in_channels * layer.out_channels +
         (layer.has_bias ? layer.out_channels : 0);
}

std::int64_t count_macs(const LayerSpec& layer, const Shape& input) {
  if (layer.kind != LayerKind::Conv) return 0;
  const Shape out = infer_shape(layer, input);
  return layer.kernel.h * layer.kernel.w * input.channels * layer.out_channels * out.height *
         out.width;
}

std::int64_t count_non_mac_ops(const LayerSpec& layer, std::span<const Shape> inputs,
                               const Shape& output) {
  switch (layer.kind) {
    case LayerKind::Conv:
      return layer.has_bias ? output.elements() : 0;
    case LayerKind::MaxPool:
      return (layer.kernel.h * layer.kernel.w - 1) * output.elements();
    case LayerKind::ReLU:
      return inputs.front().elements();
    case LayerKind::ConcatChannels:
      return output.elements();
  }
  return 0;
}

std::vector<Shape> infer_shapes(const GraphSpec& graph, const GraphIndex& index) {
  std::vector<Shape> shapes(graph.layers.size());
  std::vector<Shape> ins;
  for (auto i : index.order) {
    ins.clear();
    for (auto src : index.inputs[i])
      ins.push_back(src == GraphIndex::kInput ? graph.input_shape : shapes[src]);
    shapes[i] = infer_shape(graph.layers[i], ins);
  }
  return shapes;
}

CostReport analyze(const GraphSpec& graph) {
  const auto index = GraphIndex::build(graph);
  const auto shapes = infer_shapes(graph, index);
  CostReport r;
  r.model = graph.name;
  r.input = graph.input_shape;
  std::vector<Shape> ins;
  for (auto i : index.order) {
    const auto& l = graph.layers[i];
    ins.clear();
    for (auto src : index.inputs[i])
      ins.push_back(src == GraphIndex::kInput ? graph.input_shape : shapes[src]);
    LayerCost c;
    c.name = l.name;
    c.kind = l.kind;
    if (index.factor_of[i] != GraphIndex::kNoFactor) c.factor = graph.factors[index.factor_of[i]].name;
    c.output = shapes[i];
    c.weights = count_weights(l, ins.front().channels);
    c.macs = count_macs(l, ins.front());
    c.non_mac_ops = count_non_mac_ops(l, ins, shapes[i]);
    r.total_weights += c.weights;
    r.total_macs += c.macs;
    r.per_layer.push_back(std::move(c));
  }
  for (auto o : index.outputs) {
    r.outputs.push_back({graph.layers[o].name, shapes[o]});
    r.total_features += shapes[o].elements();
    r.total_output_channels += shapes[o].channels;
  }
  return r;
}

ComparisonReport compare(std::span<const CostReport> reports, const std::string& baseline) {
  auto base = std::find_if(reports.begin(), reports.end(),
                           [&](const CostReport& r) { return r.model == baseline; });
  if (base == reports.end()) throw SpecError("baseline '" + baseline + "' is not among the compared models");
  for (const auto& r : reports)
    if (!(r.input == base->input))
      throw SpecError("cannot compare '" + r.model + "' (" + to_string(r.input) + ") with '" +
                      baseline + "' (" + to_string(base->input) + "): input shapes differ");

  auto ratio = [](std::int64_t num, std::int64_t den) {
    if (num == den) return 1.0;
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  ComparisonReport out;
  out.baseline = baseline;
  for (const auto& r : reports) {
    ComparisonRow row;
    row.model = r.model;
    row.total_weights = r.total_weights;
    row.total_macs = r.total_macs;
    row.total_features = r.total_features;
    row.total_output_channels = r.total_output_channels;
    row.weight_ratio = ratio(base->total_weights, r.total_weights);
    row.mac_ratio = ratio(base->total_macs, r.total_macs);
    row.feature_ratio = ratio(r.total_features, base->total_features);
    out.rows.push_back(row);
  }
  return out;
}

ComparisonReport compare(std::span<const GraphSpec> graphs, const std::string& baseline) {
  std::vector<CostReport> reports;
  reports.reserve(graphs.size());
  for (const auto& g : graphs) reports.push_back(analyze(g));
  return compare(std::span<const CostReport>(reports), baseline);
}

void write_cost_csv(std::ostream& os, const CostReport& r) {
  os << "layer,kind,factor,out_c,out_h,out_w,weights,macs,non_mac_ops\n";
  for (const auto& c : r.per_layer) {
    os << c.name << ',' << to_string(c.kind) << ',' << c.factor << ',' << c.output.channels << ','
       << c.output.height << ',' << c.output.width << ',' << c.weights << ',' << c.macs << ','
       << c.non_mac_ops << '\n';
  }
}

void write_comparison_csv(std::ostream& os, const ComparisonReport& r) {
  os << "model,total_weights,total_macs,total_features,total_output_channels,weight_ratio,"
        "mac_ratio,feature_ratio\n";
  for (const auto& row : r.rows) {
    os << row.model << ',' << row.total_weights << ',' << row.total_macs << ','
       << row.total_features << ',' << row.total_output_channels << ',' << fixed6(row.weight_ratio)
       << ',' << fixed6(row.mac_ratio) << ',' << fixed6(row.feature_ratio) << '\n';
  }
}

void write_comparison_table(std::ostream& os, const ComparisonReport& r) {
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %14s %16s %14s %9s %9s %9s\n", "model", "weights", "MACs",
                "features", "w-ratio", "mac-ratio", "f-ratio");
  os << line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-16s %14lld %16lld %14lld %9.3f %9.3f %9.3f\n",
                  row.model.c_str(), static_cast<long long>(row.total_weights),
                  static_cast<long long>(row.total_macs), static_cast<long long>(row.total_features),
                  row.weight_ratio, row.mac_ratio, row.feature_ratio);
    os << line;
  }
  os << "(weight and MAC ratios are " << r.baseline << "/model; feature ratio is model/"
     << r.baseline << ")\n";
}

}  // namespace factorkit
