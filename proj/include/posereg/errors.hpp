#pragma once

#include <stdexcept>
#include <string>

namespace posereg {

/// Broad failure class; the CLI maps each one to an exit code.
enum class ErrorKind { Usage, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define POSEREG_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

// Geometry / solvers
POSEREG_DEFINE_ERROR(DepthNonPositive, Numerical)
POSEREG_DEFINE_ERROR(DegenerateSystem, Numerical)
POSEREG_DEFINE_ERROR(RankDeficientTranslation, Numerical)
POSEREG_DEFINE_ERROR(NumericalFailure, Numerical)
POSEREG_DEFINE_ERROR(ConditioningFailure, Numerical)
POSEREG_DEFINE_ERROR(SingularInformation, Numerical)

// Input data
POSEREG_DEFINE_ERROR(SchemaError, Data)
POSEREG_DEFINE_ERROR(FileNotFound, Data)
POSEREG_DEFINE_ERROR(CountMismatch, Data)
POSEREG_DEFINE_ERROR(IntrinsicsInvalid, Data)
POSEREG_DEFINE_ERROR(FrustumViolation, Data)
POSEREG_DEFINE_ERROR(ModelInvalid, Data)

// Caller misuse
POSEREG_DEFINE_ERROR(InvalidConfig, Usage)

#undef POSEREG_DEFINE_ERROR

}  // namespace posereg
