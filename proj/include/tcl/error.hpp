#pragma once

#include <stdexcept>
#include <string>

namespace tcl {

// Base of every error thrown by the library. Callers that only care about
// "did it fail" catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TCL_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

TCL_DEFINE_ERROR(ZeroVector);
TCL_DEFINE_ERROR(DimensionMismatch);
TCL_DEFINE_ERROR(EmptyInput);
TCL_DEFINE_ERROR(InvalidBatch);
TCL_DEFINE_ERROR(EmptyPositiveSet);
TCL_DEFINE_ERROR(InvalidParams);
TCL_DEFINE_ERROR(InvalidGrid);
TCL_DEFINE_ERROR(InvalidLabel);
TCL_DEFINE_ERROR(InvalidShape);
TCL_DEFINE_ERROR(NoLabels);
TCL_DEFINE_ERROR(BatchTooLarge);
TCL_DEFINE_ERROR(MissingFile);
TCL_DEFINE_ERROR(IoError);
TCL_DEFINE_ERROR(VersionMismatch);
TCL_DEFINE_ERROR(CorruptFile);
TCL_DEFINE_ERROR(EmptyTrace);
TCL_DEFINE_ERROR(ConfigError);

#undef TCL_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace tcl
