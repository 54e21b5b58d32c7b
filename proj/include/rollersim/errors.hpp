#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rollersim {

enum class ErrorCode {
  NonTangentVelocity,
  DegenerateContact,
  NonConvergence,
  NoContacts,
  RotationNotCancelled,
  DegenerateDirection,
  SurfaceMismatch,
  ParallelAxis,
  Unreachable,
  PlanInfeasible,
  BudgetExhausted,
  SolverFailure,
  Escaped,
  ParseError,
  ValidationError,
  CapacityExceeded,
  UnknownSession,
  BadLength,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonTangentVelocity: return "NonTangentVelocity";
    case ErrorCode::DegenerateContact: return "DegenerateContact";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NoContacts: return "NoContacts";
    case ErrorCode::RotationNotCancelled: return "RotationNotCancelled";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::SurfaceMismatch: return "SurfaceMismatch";
    case ErrorCode::ParallelAxis: return "ParallelAxis";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::PlanInfeasible: return "PlanInfeasible";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::Escaped: return "Escaped";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::BadLength: return "BadLength";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI exit-code mapping, the wire protocol) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }

  /// what() without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

/// Process exit status for the command-line tool: 2 for bad input, 3 for
/// solver failures, 4 when no plan exists.
constexpr int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence:
    case ErrorCode::SolverFailure:
    case ErrorCode::RotationNotCancelled:
    case ErrorCode::Escaped: return 3;
    case ErrorCode::PlanInfeasible:
    case ErrorCode::Unreachable:
    case ErrorCode::BudgetExhausted: return 4;
    default: return 2;
  }
}

}  // namespace rollersim
