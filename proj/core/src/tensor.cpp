#include "factorkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "factorkit/error.hpp"

namespace factorkit {

Tensor::Tensor(Dims dims, float fill) : dims_(dims) {
  if (dims.n < 0 || dims.c < 0 || dims.h < 0 || dims.w < 0) throw SpecError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(dims.count()), fill);
}

Tensor::Tensor(Dims dims, std::vector<float> values) : dims_(dims), data_(std::move(values)) {
  if (static_cast<std::int64_t>(data_.size()) != dims.count())
    throw SpecError("tensor payload has " + std::to_string(data_.size()) + " values, dims need " +
                    std::to_string(dims.count()));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.dims() == b.dims() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.dims() == b.dims())) return std::numeric_limits<float>::infinity();
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace factorkit
