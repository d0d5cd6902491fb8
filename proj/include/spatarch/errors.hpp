#pragma once

#include <stdexcept>
#include <string>

namespace spatarch {

// Failure categories. The CLI maps these onto process exit codes:
// io -> 1, config/data -> 2, model validity -> 3, estimation -> 4.
enum class ErrorCode {
  io,
  config,
  invalid_dimension,
  invalid_weights,
  degenerate_observation,
  non_real_spectrum,
  out_of_parameter_space,
  nonstationary,
  collinearity,
  singular_design,
  singular_information,
  degenerate_instruments,
  weighting_failure,
  boundary_solution,
  non_convergence,
  unsupported_split,
  empty_report,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// True for failures that a Monte Carlo run records as a failed replication
// rather than a bug: the optimizer hit a boundary, did not converge, or the
// weighting step degenerated on a particular draw.
inline bool is_estimation_failure(ErrorCode c) {
  return c == ErrorCode::boundary_solution || c == ErrorCode::non_convergence ||
         c == ErrorCode::weighting_failure || c == ErrorCode::collinearity ||
         c == ErrorCode::singular_design || c == ErrorCode::singular_information ||
         c == ErrorCode::degenerate_instruments;
}

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::io:
      return 1;
    case ErrorCode::config:
    case ErrorCode::invalid_dimension:
    case ErrorCode::invalid_weights:
    case ErrorCode::degenerate_observation:
      return 2;
    case ErrorCode::nonstationary:
    case ErrorCode::out_of_parameter_space:
    case ErrorCode::non_real_spectrum:
      return 3;
    default:
      return 4;
  }
}

}  // namespace spatarch
