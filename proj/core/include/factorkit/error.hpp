#pragma once

#include <stdexcept>
#include <string>

namespace factorkit {

// Malformed model descriptions, invalid graphs, inconsistent shapes.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad bytes on disk: truncated files, wrong magic, unsupported image variants.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failures while executing numeric kernels.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace factorkit
