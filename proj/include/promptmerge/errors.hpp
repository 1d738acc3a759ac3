#pragma once

#include <stdexcept>
#include <string>

namespace pm {

// Base for every error raised by the library. The CLI maps subclasses to
// stable exit codes (see tools/promptmerge.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PM_DEFINE_ERROR(Name)                 \
    class Name : public Error {               \
    public:                                   \
        using Error::Error;                   \
    }

PM_DEFINE_ERROR(CapacityExceeded);
PM_DEFINE_ERROR(PreconditionError);
PM_DEFINE_ERROR(ShapeError);
PM_DEFINE_ERROR(MaskError);
PM_DEFINE_ERROR(ConfigError);
PM_DEFINE_ERROR(StageError);
PM_DEFINE_ERROR(SpanTooShort);
PM_DEFINE_ERROR(MalformedSample);
PM_DEFINE_ERROR(EmptyTarget);
PM_DEFINE_ERROR(EmptyEval);
PM_DEFINE_ERROR(IndexError);
PM_DEFINE_ERROR(IoError);

#undef PM_DEFINE_ERROR

} // namespace pm
