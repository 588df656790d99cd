#include "finegrain/error.h"

namespace finegrain {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kUnknownName: return "unknown_name";
    case ErrorKind::kMissing: return "missing";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kConflict: return "conflict";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kNumerical: return "numerical";
  }
  return "unknown";
}

}  // namespace finegrain
