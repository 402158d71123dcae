#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nmg {

/// Failure categories shared by every module.
enum class ErrorKind {
  invalid_argument,
  out_of_range,
  degenerate_mesh,
  unsupported_extension,
  invalid_mass,
  invalid_matrix,
  solver_failure,
  wrong_family,
  missing_model,
  parse_error,
  corrupt_model,
  training_failure,
  io_error,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::out_of_range: return "out-of-range";
    case ErrorKind::degenerate_mesh: return "degenerate-mesh";
    case ErrorKind::unsupported_extension: return "unsupported-extension";
    case ErrorKind::invalid_mass: return "invalid-mass";
    case ErrorKind::invalid_matrix: return "invalid-matrix";
    case ErrorKind::solver_failure: return "solver-failure";
    case ErrorKind::wrong_family: return "wrong-family";
    case ErrorKind::missing_model: return "missing-model";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::corrupt_model: return "corrupt-model";
    case ErrorKind::training_failure: return "training-failure";
    case ErrorKind::io_error: return "io-error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace nmg
