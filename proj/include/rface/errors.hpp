#pragma once

#include <stdexcept>
#include <string>

namespace rface {

/// Raised when a caller violates an operation's preconditions (shape, range, binarity).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed input files, configs and checkpoints.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rface
