#pragma once

#include "factorkit/engine.hpp"

namespace factorkit::testing {

// Direct seven-loop convolution with double accumulation and no layout tricks.
// Independent reference for conv2d_forward; slow by construction.
Tensor conv2d_oracle(const Tensor& input, const ConvParams& params, const LayerSpec& spec);

}  // namespace factorkit::testing
