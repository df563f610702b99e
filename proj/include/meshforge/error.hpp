#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace meshforge {

enum class ErrorCode {
  GenerationFailure,
  PointOnBoundary,
  MeshingFailure,
  OutsideDomain,
  SolverFailure,
  SingularSystem,
  DegenerateSolution,
  CalibrationFailure,
  ShapeMismatch,
  NonFiniteLoss,
  FormatError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace meshforge
