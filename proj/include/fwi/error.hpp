#pragma once

#include <stdexcept>
#include <string>

namespace fwi {

/// Failure categories; the CLI maps each onto a process exit code.
enum class ErrorKind {
  config,        // invalid parameters or configuration fields
  missing_input, // a referenced file does not exist
  numerical,     // CFL violation, non-finite values
  io,            // malformed or unwritable files
  shape,         // dimension mismatch between arguments
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace fwi
