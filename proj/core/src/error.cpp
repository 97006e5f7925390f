#include "freegauss/error.hpp"

namespace freegauss {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownKey: return "UnknownKey";
    case ErrorKind::ConstraintViolation: return "ConstraintViolation";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::DegenerateSample: return "DegenerateSample";
    case ErrorKind::StaleTape: return "StaleTape";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::CoalescedAtoms: return "CoalescedAtoms";
    case ErrorKind::NonPositiveAtom: return "NonPositiveAtom";
    case ErrorKind::CoalescedSingularValues: return "CoalescedSingularValues";
    case ErrorKind::ZeroSingularValue: return "ZeroSingularValue";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError:
    case ErrorKind::UnknownKey:
    case ErrorKind::ConstraintViolation:
      return 1;
    case ErrorKind::ShapeError:
    case ErrorKind::NonFinite:
    case ErrorKind::NotSymmetric:
    case ErrorKind::DegenerateSample:
    case ErrorKind::StaleTape:
    case ErrorKind::Io:
      return 2;
    default:
      return 3;
  }
}

}  // namespace freegauss
