// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ppou {

/// Raised when a computation produces or receives non-finite values.
/// Carries enough context (parameter path, offending value) to locate the
/// source without a debugger.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an operation is invoked on inconsistent state, e.g. a
/// gradient tape that no longer matches the network it was recorded from.
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace ppou
