#pragma once

#include <stdexcept>
#include <string>

namespace itta {

/// Base class of every error raised by the harness.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ITTA_DEFINE_ERROR(Name)            \
    class Name : public Error {            \
    public:                                \
        using Error::Error;                \
    }

ITTA_DEFINE_ERROR(DimensionError);
ITTA_DEFINE_ERROR(DegenerateInputError);
ITTA_DEFINE_ERROR(EmptyInputError);
ITTA_DEFINE_ERROR(EmptyRegistryError);
ITTA_DEFINE_ERROR(FormatError);
ITTA_DEFINE_ERROR(IoError);
ITTA_DEFINE_ERROR(ConfigError);
ITTA_DEFINE_ERROR(StateError);
ITTA_DEFINE_ERROR(DataError);
ITTA_DEFINE_ERROR(MissingPatchesError);
ITTA_DEFINE_ERROR(InvariantError);
ITTA_DEFINE_ERROR(EmptyStreamError);
ITTA_DEFINE_ERROR(UsageError);

#undef ITTA_DEFINE_ERROR

}  // namespace itta
