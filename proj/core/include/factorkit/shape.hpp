#pragma once

#include <cstdint>
#include <string>

namespace factorkit {

// Per-sample activation shape. Batch lives on Tensor.
struct Shape {
  std::int64_t channels = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;

  std::int64_t elements() const { return channels * height * width; }
  bool valid() const { return channels >= 1 && height >= 1 && width >= 1; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

// "CxHxW"
std::string to_string(const Shape& s);

// Accepts "CxHxW" (or "WxHxC" when whc is set). Throws SpecError.
Shape parse_shape(const std::string& text, bool whc = false);

}  // namespace factorkit
