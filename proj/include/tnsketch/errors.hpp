#pragma once

#include <stdexcept>
#include <string>

namespace tnsketch {

// Raised for malformed user input: inconsistent shapes, unparsable files,
// out-of-range parameters. The CLI maps this to exit code 2.
class invalid_input : public std::runtime_error {
 public:
  explicit invalid_input(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an operation would exceed a configured resource ceiling, such as
// materializing a dense tensor past the dense-entry cap. CLI exit code 3.
class resource_limit : public std::runtime_error {
 public:
  explicit resource_limit(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw invalid_input(msg);
}

}  // namespace tnsketch
