#include "factorkit/shape.hpp"

#include <charconv>
#include <string_view>
#include <vector>

#include "factorkit/error.hpp"

namespace factorkit {

std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

Shape parse_shape(const std::string& text, bool whc) {
  std::vector<std::int64_t> dims;
  std::string_view rest = text;
  while (true) {
    auto cut = rest.find('x');
    std::string_view part = rest.substr(0, cut);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size() || value < 1)
      throw SpecError("bad shape '" + text + "': expected three positive integers joined by 'x'");
    dims.push_back(value);
    if (cut == std::string_view::npos) break;
    rest.remove_prefix(cut + 1);
  }
  if (dims.size() != 3)
    throw SpecError("bad shape '" + text + "': expected three positive integers joined by 'x'");
  if (whc) return Shape{dims[2], dims[1], dims[0]};
  return Shape{dims[0], dims[1], dims[2]};
}

}  // namespace factorkit
