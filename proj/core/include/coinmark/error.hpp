#pragma once

#include <stdexcept>
#include <string>

namespace coinmark {

enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  NumericalFailure,
  Io,
  Format,
  Version,
  Truncated,
  Checksum,
  MissingFile,
  UnknownLabel,
  UnknownField,
  ConstraintRestoreFailed,
};

const char* to_string(ErrorKind kind);

/// Exception type for every failure raised by the library. The kind lets
/// callers tell integrity failures (checksum, version, truncation) apart
/// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::InvalidArgument, message);
}

}  // namespace coinmark
