#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace levyconv {

enum class ErrorKind {
  InvalidArgument,
  NonConvergence,
  OutOfSupport,
  BudgetExceeded,
  DivergentMoment,
  DegenerateTail,
  AllStartsFailed,
  NonFiniteLikelihood,
  SingularHessian,
  SchemaError,
  InconsistentCoordinates,
  ParseError,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::InvalidArgument: return "InvalidArgument";
  case ErrorKind::NonConvergence: return "NonConvergence";
  case ErrorKind::OutOfSupport: return "OutOfSupport";
  case ErrorKind::BudgetExceeded: return "BudgetExceeded";
  case ErrorKind::DivergentMoment: return "DivergentMoment";
  case ErrorKind::DegenerateTail: return "DegenerateTail";
  case ErrorKind::AllStartsFailed: return "AllStartsFailed";
  case ErrorKind::NonFiniteLikelihood: return "NonFiniteLikelihood";
  case ErrorKind::SingularHessian: return "SingularHessian";
  case ErrorKind::SchemaError: return "SchemaError";
  case ErrorKind::InconsistentCoordinates: return "InconsistentCoordinates";
  case ErrorKind::ParseError: return "ParseError";
  case ErrorKind::ConfigError: return "ConfigError";
  case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers what failed.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline void require(bool condition, const std::string &message,
                    ErrorKind kind = ErrorKind::InvalidArgument) {
  if (!condition) throw Error(kind, message);
}

} // namespace levyconv
