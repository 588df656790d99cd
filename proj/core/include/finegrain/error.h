#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace finegrain {

// Coarse error category, printed by the CLI as a machine-parseable token.
enum class ErrorKind {
  kInvalidArgument,
  kParse,
  kDimensionMismatch,
  kUnknownName,
  kMissing,
  kDegenerate,
  kConflict,
  kIo,
  kNumerical,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace finegrain
