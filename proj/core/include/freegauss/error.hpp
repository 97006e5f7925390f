#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace freegauss {

enum class ErrorKind {
  // usage / configuration
  ParseError,
  UnknownKey,
  ConstraintViolation,
  // data
  ShapeError,
  NonFinite,
  NotSymmetric,
  DegenerateSample,
  StaleTape,
  Io,
  // numerical
  NoConvergence,
  CoalescedAtoms,
  NonPositiveAtom,
  CoalescedSingularValues,
  ZeroSingularValue,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code for an error of this kind: 1 usage, 2 data, 3 numerical.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace freegauss
