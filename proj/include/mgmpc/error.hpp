#pragma once

#include <stdexcept>
#include <string>

namespace mgmpc {

/// Raised when caller-supplied data violates an operation's preconditions.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when a well-formed input has no admissible answer (disconnected
/// network, no grid-forming unit available, ...).
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mgmpc
