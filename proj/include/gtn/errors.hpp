#pragma once

#include <stdexcept>
#include <string>

namespace gtn {

/// Problems with dataset files or their contents (missing manifest, shape or
/// label mismatches, non-finite values). The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure during optimization (non-finite loss or gradient). The CLI
/// maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gtn
