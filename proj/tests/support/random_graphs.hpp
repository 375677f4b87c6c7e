#pragma once

#include <cstdint>
#include <random>

#include "factorkit/engine.hpp"
#include "factorkit/graph.hpp"

namespace factorkit::testing {

struct RandomGraphOptions {
  int max_stem = 4;
  int max_factors = 3;
  int max_factor_depth = 4;
  std::int64_t max_channels = 6;
  std::int64_t max_spatial = 16;
  bool allow_trailing = true;
};

// A valid, shape-consistent graph: odd kernels with same-padding so every
// window holds a real pixel, optional concat diamonds, 0..N factors, and
// sometimes a trailing merge.
GraphSpec random_graph(std::mt19937_64& rng, const RandomGraphOptions& opt = {});

// Conv layer with random hyperparameters whose kernel fits `input`.
LayerSpec random_conv_spec(std::mt19937_64& rng, const Shape& input);

Tensor random_tensor(std::mt19937_64& rng, const Dims& dims, float lo = -1.0f, float hi = 1.0f);
ConvParams random_conv_params(std::mt19937_64& rng, const LayerSpec& spec, std::int64_t in_channels);

}  // namespace factorkit::testing
