#pragma once

#include <stdexcept>
#include <string>

namespace mtmct {

/// Process exit code family an error maps to at the CLI boundary.
enum class ErrorKind { kUsage = 2, kFormat = 3, kRuntime = 4 };

class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what, ErrorKind kind)
      : std::runtime_error(name + ": " + what), name_(std::move(name)), kind_(kind) {}

  const std::string& name() const noexcept { return name_; }
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  std::string name_;
  ErrorKind kind_;
};

#define MTMCT_DEFINE_ERROR(Name, Kind)                                     \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(#Name, what, Kind) {}  \
  };

MTMCT_DEFINE_ERROR(UsageError, ErrorKind::kUsage)
MTMCT_DEFINE_ERROR(ParseError, ErrorKind::kFormat)
MTMCT_DEFINE_ERROR(FormatError, ErrorKind::kFormat)
MTMCT_DEFINE_ERROR(CalibrationError, ErrorKind::kFormat)
MTMCT_DEFINE_ERROR(SpecError, ErrorKind::kFormat)
MTMCT_DEFINE_ERROR(ProjectionError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(MapError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(OffMapError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(DegenerateRasterError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(ModelError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(NormError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(DimError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(OrderError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(EmptyBankError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(NumericError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(DegenerateError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(InternalError, ErrorKind::kRuntime)
MTMCT_DEFINE_ERROR(EvalError, ErrorKind::kRuntime)

#undef MTMCT_DEFINE_ERROR

}  // namespace mtmct
