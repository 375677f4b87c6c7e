#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "factorkit/graph.hpp"

namespace factorkit {

enum class ZooModel { GoogleNet4e, FactorNetV1, FactorNetV2 };

std::string_view to_string(ZooModel model);
std::optional<ZooModel> parse_zoo_model(std::string_view name);

// Channel width multiplier p/q in (0, 1].
struct Ratio {
  std::int64_t num = 1;
  std::int64_t den = 1;

  // round(c * p / q), never below 1
  std::int64_t scale(std::int64_t channels) const;
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

// "p/q" or a plain integer; rejects values outside (0, 1].
Ratio parse_ratio(const std::string& text);

struct ZooConfig {
  ZooModel model = ZooModel::GoogleNet4e;
  Ratio width{1, 1};
  Shape input_shape{3, 1080, 1920};
};

// GoogleNet through inception 4e, published branch widths. Monolithic.
GraphSpec build_googlenet4e(const ZooConfig& cfg);

// GoogleNet Part A stem (conv1, pool1, conv2 reduce/3x3, pool2) followed by four
// factors: 3x3 max-pool chain, 3x3 conv, 5x5 conv, 7x7 conv.
GraphSpec build_factornet_v1(const ZooConfig& cfg);

// No stem; the same four factor families each run from the raw input.
GraphSpec build_factornet_v2(const ZooConfig& cfg);

GraphSpec build_model(const ZooConfig& cfg);

}  // namespace factorkit
