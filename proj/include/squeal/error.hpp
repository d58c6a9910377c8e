#pragma once

#include <stdexcept>

namespace squeal {

/// Raised for violated preconditions and malformed inputs throughout the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace squeal
