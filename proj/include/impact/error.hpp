#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace impact {

/// Failure categories surfaced by the solvers. The CLI maps these onto exit codes.
enum class ErrorKind {
  invalid_argument,
  mode_conflict,
  numeric_overflow,
  unsupported_operation,
  contract_violation,
  root_not_found,
  ambiguity,
  non_convergence,
  inversion_unavailable,
  image_violation,
  extrapolation_refused,
  domain_error,
  concavity_violation,
  control_bracket_exhausted,
  inverse_domain_error,
  step_size_violation,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::mode_conflict: return "mode-conflict";
    case ErrorKind::numeric_overflow: return "numeric-overflow";
    case ErrorKind::unsupported_operation: return "unsupported-operation";
    case ErrorKind::contract_violation: return "contract-violation";
    case ErrorKind::root_not_found: return "root-not-found";
    case ErrorKind::ambiguity: return "ambiguity";
    case ErrorKind::non_convergence: return "non-convergence";
    case ErrorKind::inversion_unavailable: return "inversion-unavailable";
    case ErrorKind::image_violation: return "image-violation";
    case ErrorKind::extrapolation_refused: return "extrapolation-refused";
    case ErrorKind::domain_error: return "domain-error";
    case ErrorKind::concavity_violation: return "concavity-violation";
    case ErrorKind::control_bracket_exhausted: return "control-bracket-exhausted";
    case ErrorKind::inverse_domain_error: return "inverse-domain-error";
    case ErrorKind::step_size_violation: return "step-size-violation";
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

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace impact
