#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "factorkit/engine.hpp"

namespace factorkit {

struct ParamCheck {
  std::string layer;
  std::string part;  // "weight" or "bias"
  std::int64_t checked = 0;
  std::int64_t excluded = 0;  // perturbation crossed a relu kink or switched a pool argmax
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double epsilon = 1e-3;
  double threshold = 1e-3;
  std::vector<ParamCheck> entries;
  std::int64_t checked = 0;
  std::int64_t excluded = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Compares backward() against central differences of loss = sum of every
// output element, parameter by parameter, with the differences evaluated in
// double precision. Elements whose +/-epsilon evaluations
// change any downstream relu mask or pool argmax are excluded, not failed.
// Throws SpecError above `max_params` parameters.
GradCheckReport grad_check(const CompiledGraph& graph, const Parameters& params, const Tensor& input,
                           double epsilon = 1e-3, double threshold = 1e-3,
                           std::int64_t max_params = 10000);

}  // namespace factorkit
