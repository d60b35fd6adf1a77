#pragma once

#include <stdexcept>
#include <string>

namespace vaead {

// Base of every error raised by the library. Callers that only care about
// "something in vaead failed" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define VAEAD_DEFINE_ERROR(Name)                     \
    class Name : public Error {                      \
    public:                                          \
        explicit Name(const std::string& what)       \
            : Error(std::string(#Name ": ") + what) {} \
    }

// data ingestion
VAEAD_DEFINE_ERROR(CategoryNotFound);
VAEAD_DEFINE_ERROR(MaskMissing);
VAEAD_DEFINE_ERROR(DecodeError);
VAEAD_DEFINE_ERROR(LayoutError);
VAEAD_DEFINE_ERROR(EmptySplit);

// models and losses
VAEAD_DEFINE_ERROR(ShapeError);
VAEAD_DEFINE_ERROR(NumericError);
VAEAD_DEFINE_ERROR(PriorMismatch);
VAEAD_DEFINE_ERROR(DivergedError);

// GRF prior
VAEAD_DEFINE_ERROR(ParameterError);
VAEAD_DEFINE_ERROR(SymmetryError);
VAEAD_DEFINE_ERROR(OracleTooLarge);

// evaluation
VAEAD_DEFINE_ERROR(DegenerateLabels);
VAEAD_DEFINE_ERROR(EmptyEvaluation);
VAEAD_DEFINE_ERROR(DuplicateResult);

// configuration / checkpoints / manifests
VAEAD_DEFINE_ERROR(ConfigError);

#undef VAEAD_DEFINE_ERROR

} // namespace vaead
