#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "factorkit/graph.hpp"
#include "factorkit/tensor.hpp"

namespace factorkit {

// Weights (out_channels, in_channels, kh, kw) and an optional bias.
struct ConvParams {
  Tensor weight;
  std::vector<float> bias;  // empty when the layer has no bias
};

using Parameters = std::map<std::string, ConvParams>;

// ---- layer kernels ----------------------------------------------------------

// im2col + matrix multiply with double accumulation. Zero padding.
Tensor conv2d_forward(const Tensor& input, const ConvParams& params, const LayerSpec& spec);

struct ConvGrads {
  Tensor input;
  Tensor weight;
  std::vector<float> bias;
};
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const LayerSpec& spec,
                          const Tensor& grad_output);

struct PoolResult {
  Tensor output;
  std::vector<std::int64_t> argmax;  // flat input offset per output element
};

// Padding never wins; ties keep the first element in (h, w) scan order.
PoolResult maxpool_forward(const Tensor& input, const LayerSpec& spec);
Tensor maxpool_backward(const Dims& input_dims, std::span<const std::int64_t> argmax,
                        const Tensor& grad_output);

Tensor relu_forward(const Tensor& input);
// Gradient passes where the pre-activation is strictly positive.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

Tensor concat_forward(std::span<const Tensor* const> inputs);
Tensor concat_forward(const std::vector<Tensor>& inputs);
std::vector<Tensor> concat_backward(const Tensor& grad_output, std::span<const std::int64_t> channels);

// ---- graph execution --------------------------------------------------------

// Graph plus resolved indices and per-layer shapes, computed once.
class CompiledGraph {
 public:
  explicit CompiledGraph(GraphSpec graph);

  const GraphSpec& spec() const { return graph_; }
  const GraphIndex& index() const { return index_; }
  const std::vector<Shape>& shapes() const { return shapes_; }
  const LayerSpec& layer(std::size_t i) const { return graph_.layers[i]; }
  std::int64_t in_channels(std::size_t i) const;

 private:
  GraphSpec graph_;
  GraphIndex index_;
  std::vector<Shape> shapes_;
};

// Per-layer intermediates, indexed like GraphSpec::layers. Slots are written
// by exactly one executor each, so disjoint layer sets may run concurrently.
struct ForwardCache {
  Tensor input;
  std::vector<Tensor> values;
  std::vector<std::vector<std::int64_t>> argmax;
};

// MACs actually performed per layer, indexed like GraphSpec::layers.
struct ExecStats {
  std::vector<std::int64_t> macs;
};

ForwardCache make_cache(const CompiledGraph& graph, Tensor input);
ExecStats make_stats(const CompiledGraph& graph);

// Runs `layers` (which must be in dependency order) against the cache. When
// `cancel` becomes true the loop stops before the next layer.
void run_layers(const CompiledGraph& graph, const Parameters& params,
                std::span<const std::size_t> layers, ForwardCache& cache, ExecStats* stats = nullptr,
                const std::atomic<bool>* cancel = nullptr);

std::vector<Tensor> collect_outputs(const CompiledGraph& graph, const ForwardCache& cache);

// Sequential forward in topological order; one tensor per graph output.
std::vector<Tensor> forward(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                            ForwardCache* cache = nullptr, ExecStats* stats = nullptr);
std::vector<Tensor> forward(const GraphSpec& graph, const Parameters& params, const Tensor& input);

struct Gradients {
  Parameters params;  // same layout as the parameters
  Tensor input;
};

// Reverse-mode pass over a cache filled by forward(). One gradient per output.
Gradients backward(const CompiledGraph& graph, const Parameters& params, const ForwardCache& cache,
                   std::span<const Tensor> output_grads);

// Fan-in scaled uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero
// biases. Deterministic for a given seed.
Parameters init_params(const CompiledGraph& graph, std::uint64_t seed);
Parameters init_params(const GraphSpec& graph, std::uint64_t seed);

// Throws SpecError when a conv layer lacks parameters or their dims disagree.
void check_params(const CompiledGraph& graph, const Parameters& params);

std::int64_t parameter_count(const Parameters& params);

}  // namespace factorkit
