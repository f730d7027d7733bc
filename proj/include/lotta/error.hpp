#pragma once

#include <stdexcept>
#include <string>

namespace lotta {

/// Raised for invalid inputs and unrecoverable model/sampler failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lotta
