#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "factorkit/shape.hpp"

namespace factorkit {

struct Dims {
  std::int64_t n = 1, c = 1, h = 1, w = 1;

  std::int64_t count() const { return n * c * h * w; }
  Shape shape() const { return {c, h, w}; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

// Dense NCHW float tensor, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims dims, float fill = 0.0f);
  Tensor(Dims dims, std::vector<float> values);

  const Dims& dims() const { return dims_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * dims_.c + c) * dims_.h + h) * dims_.w + w;
  }
  float& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(offset(n, c, h, w))];
  }
  float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(offset(n, c, h, w))];
  }

 private:
  Dims dims_{0, 0, 0, 0};
  std::vector<float> data_;
};

// Same dims and identical bit patterns.
bool bitwise_equal(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);
float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace factorkit
