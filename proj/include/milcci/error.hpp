#pragma once

#include <stdexcept>
#include <string>

namespace milcci {

// Error taxonomy shared by the library and the CLI. The CLI maps each kind to
// a process exit code, so library code should pick the kind that describes the
// root cause, not the call site.
enum class ErrorKind {
  schema,   // malformed input files, inconsistent shapes, bad labels
  param,    // invalid hyperparameters or arguments
  numeric,  // singular systems, non-finite values, failed factorizations
  io,       // filesystem problems
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  const char* kind_name() const noexcept {
    switch (kind_) {
      case ErrorKind::schema: return "schema";
      case ErrorKind::param: return "param";
      case ErrorKind::numeric: return "numeric";
      case ErrorKind::io: return "io";
    }
    return "unknown";
  }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_schema(const std::string& msg) { throw Error(ErrorKind::schema, msg); }
[[noreturn]] inline void throw_param(const std::string& msg) { throw Error(ErrorKind::param, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorKind::io, msg); }

}  // namespace milcci
