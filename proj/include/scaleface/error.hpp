#pragma once

#include <stdexcept>
#include <string>

namespace scaleface {

/// Coarse failure category; the CLI maps each to its own exit code.
enum class ErrorKind {
  invalid_argument,  // shape/range violations, infeasible configurations
  format,            // malformed or unreadable files
  numeric,           // degenerate or non-finite numerics
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what,
                    ErrorKind kind = ErrorKind::invalid_argument) {
  if (!cond) fail(kind, what);
}

}  // namespace scaleface
