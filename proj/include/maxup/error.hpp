#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maxup {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MAXUP_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

MAXUP_DEFINE_ERROR(ShapeMismatch);
MAXUP_DEFINE_ERROR(NotScalarOutput);
MAXUP_DEFINE_ERROR(NonConvergence);
MAXUP_DEFINE_ERROR(BadSpec);
MAXUP_DEFINE_ERROR(EmptyBatch);
MAXUP_DEFINE_ERROR(EmptyDataset);
MAXUP_DEFINE_ERROR(ConfigInvalid);
MAXUP_DEFINE_ERROR(DimensionMismatch);
MAXUP_DEFINE_ERROR(UnknownLabel);
MAXUP_DEFINE_ERROR(ZeroVector);
MAXUP_DEFINE_ERROR(BadExponent);
MAXUP_DEFINE_ERROR(KinkProximity);
MAXUP_DEFINE_ERROR(GradientOfZeroOne);
MAXUP_DEFINE_ERROR(NotOneHot);

#undef MAXUP_DEFINE_ERROR

/// CSV/JSON parse failure carrying the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace maxup
