#pragma once

#include <stdexcept>
#include <string>

namespace mtdlag {

/// Raised when a caller violates an operation's precondition.
class contract_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed user data (sequence files, model documents).
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw contract_error(what);
}

}  // namespace mtdlag
