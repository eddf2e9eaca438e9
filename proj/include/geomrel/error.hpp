#pragma once

#include <stdexcept>
#include <string>

namespace geomrel {

enum class ErrorKind {
  Parse,
  Validation,
  Shape,
  Checksum,
  NonFinite,
  Io,
  Degenerate,
  ContextMismatch,
  InvalidArgument,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit status for a failure of the given kind:
// 1 validation, 2 I/O, 3 degenerate data.
int exit_code(ErrorKind kind) noexcept;

}  // namespace geomrel
