#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "factorkit/shape.hpp"

namespace factorkit {

// Name used in LayerSpec::inputs to refer to the graph's single input tensor.
inline constexpr std::string_view kGraphInput = "@input";

enum class LayerKind { Conv, MaxPool, ReLU, ConcatChannels };

std::string_view to_string(LayerKind kind);

struct Extent {
  std::int64_t h = 1;
  std::int64_t w = 1;
  friend bool operator==(const Extent&, const Extent&) = default;
};

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::ReLU;
  Extent kernel{1, 1};
  Extent stride{1, 1};
  Extent padding{0, 0};
  std::int64_t out_channels = 0;
  bool has_bias = false;
  std::vector<std::string> inputs;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

LayerSpec make_conv(std::string name, std::string input, Extent kernel, Extent stride,
                    Extent padding, std::int64_t out_channels, bool bias = true);
LayerSpec make_maxpool(std::string name, std::string input, Extent kernel, Extent stride,
                       Extent padding);
LayerSpec make_relu(std::string name, std::string input);
LayerSpec make_concat(std::string name, std::vector<std::string> inputs);

// A factor is an independent sub-network. Its body names layers of the owning
// graph in declaration order; the first is the entry, the last is the exit.
struct Factor {
  std::string name;
  std::vector<std::string> body;

  const std::string& entry() const { return body.front(); }
  const std::string& exit() const { return body.back(); }

  friend bool operator==(const Factor&, const Factor&) = default;
};

// Architecture description. `layers` holds every layer in declaration order.
// Layers not claimed by a factor (and not the trailing merge) form the stem.
// Graph outputs are the factor exits, never implicitly merged; a monolithic
// graph outputs its sinks; an explicit `trailing` concat replaces both.
struct GraphSpec {
  std::string name;
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::vector<Factor> factors;
  std::optional<std::string> trailing;

  const LayerSpec* find(std::string_view layer) const;

  friend bool operator==(const GraphSpec&, const GraphSpec&) = default;
};

enum class ViolationKind {
  EmptyGraph,
  InvalidInputShape,
  DuplicateName,
  DanglingInput,
  CycleAt,
  BadArity,
  BadHyperparameter,
  FactorOverlap,
  UnknownFactorLayer,
  EmptyFactor,
  CrossFactorEdge,
  FactorEntryInput,
  BadTrailing,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::vector<std::string> layers;
  std::string detail;

  std::string describe() const;
};

// Every structural problem found, empty iff the graph is well formed.
std::vector<Violation> validate(const GraphSpec& graph);

// Throws SpecError listing the violations, if any.
void require_valid(const GraphSpec& graph);

// Kahn's algorithm; ready layers are taken in declaration order.
std::vector<std::string> topo_order(const GraphSpec& graph);

// Resolved, index-based view of a valid graph shared by the analyzer and the
// executors. Layer indices refer to GraphSpec::layers.
struct GraphIndex {
  static constexpr std::size_t kInput = static_cast<std::size_t>(-1);
  static constexpr std::size_t kNoFactor = static_cast<std::size_t>(-1);

  std::vector<std::size_t> order;                    // topological
  std::vector<std::vector<std::size_t>> inputs;      // kInput for graph input
  std::vector<std::size_t> factor_of;                // kNoFactor for stem/trailing
  std::vector<std::vector<std::size_t>> factor_order;  // per factor, topological
  std::vector<std::size_t> stem_order;               // topological
  std::optional<std::size_t> trailing;
  std::vector<std::size_t> outputs;

  static GraphIndex build(const GraphSpec& graph);
};

// Output layer names in output order.
std::vector<std::string> output_names(const GraphSpec& graph);

}  // namespace factorkit
