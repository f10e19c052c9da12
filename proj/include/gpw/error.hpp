#pragma once

#include <stdexcept>
#include <string>

namespace gpw {

enum class ErrorCode {
  BehindCamera,
  Degenerate,
  NonFiniteState,
  UnknownBody,
  DimensionMismatch,
  ShapeMismatch,
  EmptyObject,
  NoViews,
  NoObservations,
  NoGaussians,
  EmptyRecord,
  Config,
  Io,
};

const char* to_string(ErrorCode code);

//! Exception carrying a machine-readable code. All library errors are reported
//! through this type so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gpw
