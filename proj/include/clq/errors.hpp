#pragma once

#include <stdexcept>
#include <string>

namespace clq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CLQ_DEFINE_ERROR(Name)        \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  };

CLQ_DEFINE_ERROR(DistributionError)
CLQ_DEFINE_ERROR(EnumerationCapExceeded)
CLQ_DEFINE_ERROR(PolicyError)
CLQ_DEFINE_ERROR(ObservationMismatch)
CLQ_DEFINE_ERROR(EmptyInput)
CLQ_DEFINE_ERROR(GridMismatch)
CLQ_DEFINE_ERROR(ParameterError)
CLQ_DEFINE_ERROR(GenerationFailed)
CLQ_DEFINE_ERROR(ParseError)
CLQ_DEFINE_ERROR(InvalidInstance)
CLQ_DEFINE_ERROR(LpError)

#undef CLQ_DEFINE_ERROR

}  // namespace clq
