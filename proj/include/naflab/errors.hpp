#pragma once

#include <stdexcept>
#include <string>

namespace naflab {

// Base class for all library errors. Subtypes mirror the failure modes of
// the individual modules so tests and the CLI can react per type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define NAFLAB_DEFINE_ERROR(NAME)                    \
    struct NAME : Error {                            \
        using Error::Error;                          \
    }

NAFLAB_DEFINE_ERROR(InvalidSpec);
NAFLAB_DEFINE_ERROR(ShapeMismatch);
NAFLAB_DEFINE_ERROR(DimensionMismatch);
NAFLAB_DEFINE_ERROR(StepOutOfRange);
NAFLAB_DEFINE_ERROR(EmptyShard);
NAFLAB_DEFINE_ERROR(SingularSystem);
NAFLAB_DEFINE_ERROR(InvalidAR);
NAFLAB_DEFINE_ERROR(InvalidSampleCount);
NAFLAB_DEFINE_ERROR(UnsupportedFamily);
NAFLAB_DEFINE_ERROR(EmptyAcceptanceRegion);
NAFLAB_DEFINE_ERROR(EmptyArms);
NAFLAB_DEFINE_ERROR(IndexOutOfRange);
NAFLAB_DEFINE_ERROR(UnpulledArm);
NAFLAB_DEFINE_ERROR(DomainError);
NAFLAB_DEFINE_ERROR(InvalidGrid);
NAFLAB_DEFINE_ERROR(Degenerate);
NAFLAB_DEFINE_ERROR(Empty);
NAFLAB_DEFINE_ERROR(NoCandidateInXTilde);
NAFLAB_DEFINE_ERROR(UnsupportedDimension);

#undef NAFLAB_DEFINE_ERROR

// Configuration errors carry the offending field so the CLI can print a
// useful diagnostic and exit with status 2.
struct ConfigError : Error {
    std::string field;
    ConfigError(std::string field_, const std::string& what_)
        : Error("config field '" + field_ + "': " + what_), field(std::move(field_)) {}
};

}  // namespace naflab
