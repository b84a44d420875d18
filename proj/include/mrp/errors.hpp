#pragma once

#include <stdexcept>
#include <string>

namespace mrp {

// Coarse failure classes. They map one-to-one onto CLI exit codes and C API
// status values.
enum class ErrorClass { kValidation = 2, kIo = 3, kNumerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass error_class, const std::string& what)
      : std::runtime_error(what), class_(error_class) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

#define MRP_DEFINE_ERROR(Name, Class)                            \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what)                       \
        : Error(ErrorClass::Class, #Name ": " + what) {}         \
  };

MRP_DEFINE_ERROR(DomainError, kValidation)
MRP_DEFINE_ERROR(ShapeError, kValidation)
MRP_DEFINE_ERROR(ValidationError, kValidation)
MRP_DEFINE_ERROR(EmptyError, kValidation)
MRP_DEFINE_ERROR(IoError, kIo)
MRP_DEFINE_ERROR(EmptyDistributionError, kNumerical)
MRP_DEFINE_ERROR(SupportError, kNumerical)
MRP_DEFINE_ERROR(DegenerateConfigurationError, kNumerical)
MRP_DEFINE_ERROR(InsufficientDataError, kNumerical)
MRP_DEFINE_ERROR(NoHypothesisError, kNumerical)
MRP_DEFINE_ERROR(GenerationError, kNumerical)
MRP_DEFINE_ERROR(NumericalError, kNumerical)

#undef MRP_DEFINE_ERROR

// Raised when the rotation-gradient system of a Kabsch solve is nearly
// singular. Carries the offending gap so callers can log it.
class IllConditionedGradientError : public Error {
 public:
  explicit IllConditionedGradientError(double gap)
      : Error(ErrorClass::kNumerical,
              "IllConditionedGradientError: singular value gap " + std::to_string(gap)),
        gap_(gap) {}
  double gap() const noexcept { return gap_; }

 private:
  double gap_;
};

}  // namespace mrp
